#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/data.hpp"
#include "lowshot/metalearners.hpp"
#include "lowshot/nets.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

enum class PolicyKind {
  none,
  learned_g,
  gaussian,
  dropout,
  weighted_average,
  deterministic_g,
  untrained_g,
};

inline const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::none: return "none";
    case PolicyKind::learned_g: return "learned-g";
    case PolicyKind::gaussian: return "gaussian";
    case PolicyKind::dropout: return "dropout";
    case PolicyKind::weighted_average: return "weighted";
    case PolicyKind::deterministic_g: return "det-g";
    case PolicyKind::untrained_g: return "untrained-g";
  }
  return "?";
}

struct AugmentationPolicy {
  PolicyKind kind = PolicyKind::none;
  int n_aug = 20;  // target per-class example count after augmentation
  bool gaussian_shared = true;
  double dropout_rate = 0.2;

  bool augments() const { return kind != PolicyKind::none; }

  // only the learned hallucinator takes gradients; every ablation generates
  // off-tape constants
  bool trains_g() const { return kind == PolicyKind::learned_g; }

  bool uses_g() const {
    return kind == PolicyKind::learned_g || kind == PolicyKind::deterministic_g ||
           kind == PolicyKind::untrained_g;
  }

  void validate() const {
    require(n_aug >= 1, "AugmentationPolicy: n_aug ", n_aug, " must be >= 1");
    if (kind == PolicyKind::dropout)
      require(dropout_rate >= 0.0 && dropout_rate < 1.0,
              "AugmentationPolicy: dropout rate ", dropout_rate,
              " outside [0,1)");
  }
};

/// Per-dimension feature statistics from the base classes, for the Gaussian
/// jitter ablation. Shared mode pools all base examples.
struct GaussianStats {
  bool shared = true;
  std::vector<double> mean;  // shared mode
  std::vector<double> var;
  std::map<ClassId, std::vector<double>> class_mean;
  std::map<ClassId, std::vector<double>> class_var;

  const std::vector<double>& variance_for(ClassId c) const {
    if (shared) return var;
    auto it = class_var.find(c);
    require(it != class_var.end(), "GaussianStats: no stats for class ", c);
    return it->second;
  }
};

inline GaussianStats estimate_gaussian_stats(const LabeledSet& base,
                                             bool shared) {
  require(!base.empty(), "estimate_gaussian_stats: empty base set");
  const std::size_t d = static_cast<std::size_t>(base.feature_dim());
  GaussianStats out;
  out.shared = shared;

  auto accumulate = [&](const std::vector<const Example*>& items)
      -> std::pair<std::vector<double>, std::vector<double>> {
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const Example* e : items)
      for (std::size_t j = 0; j < d; ++j) mean[j] += e->features[j];
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(items.size());
    for (const Example* e : items)
      for (std::size_t j = 0; j < d; ++j) {
        const double dev = e->features[j] - mean[j];
        var[j] += dev * dev;
      }
    // unbiased
    for (std::size_t j = 0; j < d; ++j)
      var[j] /= static_cast<double>(items.size() - 1);
    return {std::move(mean), std::move(var)};
  };

  if (shared) {
    require(base.size() >= 2,
            "estimate_gaussian_stats: need >= 2 examples, got ", base.size());
    std::vector<const Example*> all;
    for (const auto& e : base.examples) all.push_back(&e);
    auto [m, v] = accumulate(all);
    out.mean = std::move(m);
    out.var = std::move(v);
  } else {
    for (ClassId c : base.classes()) {
      std::vector<const Example*> items;
      for (const auto& e : base.examples)
        if (e.label == c) items.push_back(&e);
      require(items.size() >= 2, "estimate_gaussian_stats: class ", c,
              " has ", items.size(), " examples, need >= 2 for variance");
      auto [m, v] = accumulate(items);
      out.class_mean[c] = std::move(m);
      out.class_var[c] = std::move(v);
    }
  }
  return out;
}

// --- per-kind generators ----------------------------------------------------

// seed + N(0, diag var), clamped at 0 to preserve the feature domain
inline std::vector<double> gen_gaussian(const std::vector<double>& seed,
                                        const std::vector<double>& var,
                                        Rng& rng) {
  require(seed.size() == var.size(), "gen_gaussian: dim mismatch");
  std::vector<double> out(seed.size());
  for (std::size_t j = 0; j < seed.size(); ++j) {
    require(var[j] >= 0.0, "gen_gaussian: negative variance ", var[j]);
    out[j] = std::max(0.0, seed[j] + rng.normal(0.0, std::sqrt(var[j])));
  }
  return out;
}

inline std::vector<double> gen_dropout(const std::vector<double>& seed,
                                       double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "gen_dropout: rate ", rate,
          " outside [0,1)");
  std::vector<double> out(seed.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t j = 0; j < seed.size(); ++j)
    out[j] = rng.uniform() < rate ? 0.0 : seed[j] * keep_scale;
  return out;
}

// lambda * seed + (1 - lambda) * partner, lambda ~ U(0,1)
inline std::vector<double> gen_weighted_average(const std::vector<double>& seed,
                                                const std::vector<double>& partner,
                                                Rng& rng) {
  require(seed.size() == partner.size(), "gen_weighted_average: dim mismatch");
  const double lambda = rng.uniform();
  std::vector<double> out(seed.size());
  for (std::size_t j = 0; j < seed.size(); ++j)
    out[j] = lambda * seed[j] + (1.0 - lambda) * partner[j];
  return out;
}

/// Everything the generators may need besides the training set itself.
struct AugmentContext {
  const ParamStore* store = nullptr;      // G weights, when the policy uses G
  HallucinatorSpec g_spec;
  std::string g_prefix = "G";
  const GaussianStats* stats = nullptr;   // gaussian policy
};

inline std::vector<double> generate_one(const AugmentationPolicy& policy,
                                        const AugmentContext& ctx,
                                        const std::vector<double>& seed,
                                        const std::vector<double>& partner,
                                        ClassId label, Rng& rng) {
  switch (policy.kind) {
    case PolicyKind::gaussian:
      require(ctx.stats != nullptr, "augment: gaussian policy needs stats");
      return gen_gaussian(seed, ctx.stats->variance_for(label), rng);
    case PolicyKind::dropout:
      return gen_dropout(seed, policy.dropout_rate, rng);
    case PolicyKind::weighted_average:
      return gen_weighted_average(seed, partner, rng);
    case PolicyKind::learned_g:
    case PolicyKind::untrained_g: {
      require(ctx.store != nullptr, "augment: policy needs hallucinator params");
      std::vector<double> z(static_cast<std::size_t>(ctx.g_spec.noise_dim));
      for (auto& v : z) v = rng.normal();
      return hallucinate_one(*ctx.store, ctx.g_spec, ctx.g_prefix, seed, z);
    }
    case PolicyKind::deterministic_g: {
      require(ctx.store != nullptr, "augment: policy needs hallucinator params");
      const std::vector<double> z(static_cast<std::size_t>(ctx.g_spec.noise_dim), 0.0);
      return hallucinate_one(*ctx.store, ctx.g_spec, ctx.g_prefix, seed, z);
    }
    case PolicyKind::none:
      break;
  }
  fail("generate_one: policy does not generate");
}

/// Brings every class up to exactly n_aug examples (classes already at or
/// above n_aug are untouched). Real examples are preserved verbatim; the
/// generated ones carry the synthetic flag. Per-class generation uses rng
/// streams split from one draw on the master stream.
inline LabeledSet augment(const AugmentationPolicy& policy,
                          const AugmentContext& ctx, const LabeledSet& train,
                          Rng& rng) {
  policy.validate();
  LabeledSet out = train;
  if (!policy.augments()) return out;

  const std::uint64_t call_seed = rng.next_u64();
  for (ClassId c : train.classes()) {
    std::vector<std::size_t> real;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.examples[i].label == c && !train.examples[i].synthetic)
        real.push_back(i);
    require(!real.empty(), "augment: class ", c, " has no real example");

    const std::size_t have = train.count_of(c);
    if (have >= static_cast<std::size_t>(policy.n_aug)) continue;

    Rng class_rng(mix_seed(call_seed, c));
    for (std::size_t g = have; g < static_cast<std::size_t>(policy.n_aug); ++g) {
      const std::size_t seed_idx = real[class_rng.uniform_index(real.size())];
      const auto& seed = train.examples[seed_idx].features;
      // weighted-average partner: another real example when one exists
      std::vector<double> partner = seed;
      if (policy.kind == PolicyKind::weighted_average && real.size() > 1) {
        std::size_t p = seed_idx;
        while (p == seed_idx)
          p = real[class_rng.uniform_index(real.size())];
        partner = train.examples[p].features;
      }
      out.add(generate_one(policy, ctx, seed, partner, c, class_rng), c,
              /*synthetic=*/true);
    }
  }
  return out;
}

/// In-graph augmentation for meta-training. Only the learned hallucinator
/// builds tape nodes (so gradients reach w_G); every other policy appends
/// constant leaves, matching the plain augment() output exactly.
inline void augment_episode_nodes(Tape& tape, const TapeBinding& binding,
                                  const AugmentationPolicy& policy,
                                  const AugmentContext& ctx,
                                  const LabeledSet& train, EpisodeNodes& ep,
                                  Rng& rng) {
  policy.validate();
  if (!policy.augments()) return;

  if (!policy.trains_g()) {
    LabeledSet augmented = augment(policy, ctx, train, rng);
    for (std::size_t i = train.size(); i < augmented.size(); ++i) {
      ep.train_features.push_back(
          tape.leaf(Tensor::vec(augmented.examples[i].features)));
      ep.train_labels.push_back(augmented.examples[i].label);
    }
    return;
  }

  // learned-G: same seed-sampling schedule as augment(), but the generated
  // features stay on the tape
  const std::uint64_t call_seed = rng.next_u64();
  std::vector<Value> seed_nodes;
  std::vector<Tensor> noise_rows;
  std::vector<ClassId> labels;
  for (ClassId c : train.classes()) {
    std::vector<std::size_t> real;
    for (std::size_t i = 0; i < train.size(); ++i)
      if (train.examples[i].label == c && !train.examples[i].synthetic)
        real.push_back(i);
    require(!real.empty(), "augment: class ", c, " has no real example");
    const std::size_t have = train.count_of(c);
    if (have >= static_cast<std::size_t>(policy.n_aug)) continue;

    Rng class_rng(mix_seed(call_seed, c));
    for (std::size_t g = have; g < static_cast<std::size_t>(policy.n_aug); ++g) {
      const std::size_t seed_idx = real[class_rng.uniform_index(real.size())];
      seed_nodes.push_back(ep.train_features[seed_idx]);
      Tensor z(Shape::vec(ctx.g_spec.noise_dim));
      for (std::size_t j = 0; j < z.size(); ++j) z[j] = class_rng.normal();
      noise_rows.push_back(std::move(z));
      labels.push_back(c);
    }
  }
  if (labels.empty()) return;

  std::vector<Value> noise_nodes;
  noise_nodes.reserve(noise_rows.size());
  for (auto& z : noise_rows) noise_nodes.push_back(tape.leaf(std::move(z)));
  Value seeds = tape.stack_rows(seed_nodes);
  Value noise = tape.stack_rows(noise_nodes);
  Value generated =
      hallucinate_rows(tape, binding, ctx.g_spec, ctx.g_prefix, seeds, noise);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ep.train_features.push_back(tape.row(generated, static_cast<int>(i)));
    ep.train_labels.push_back(labels[i]);
  }
}

/// Delimited text export (class id, synthetic flag, feature components), the
/// raw material for external visualization tools.
inline void export_examples(std::ostream& os, const LabeledSet& set) {
  os << "class,synthetic";
  for (int j = 0; j < set.feature_dim(); ++j) os << ",f" << j;
  os << "\n";
  for (const auto& e : set.examples) {
    os << e.label << "," << (e.synthetic ? 1 : 0);
    for (double v : e.features) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), v);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    os << "\n";
  }
}

}  // namespace lowshot
