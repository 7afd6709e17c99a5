#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/data.hpp"
#include "lowshot/hallucination.hpp"
#include "lowshot/metalearners.hpp"
#include "lowshot/params.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

struct EpisodeConfig {
  int m = 5;   // classes per episode
  int n = 1;   // (maximum) real examples per class
  int q = 5;   // test examples per class
  int iterations = 30000;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool variable_shot = false;  // resample the shot count in [1, n] per episode
  // early stopping on a held-out episode loss plateau
  int eval_interval = 200;
  int patience = 2000;
  int holdout_episodes = 8;

  void validate(std::size_t available_classes) const {
    require(m >= 2, "EpisodeConfig: m ", m, " must be >= 2");
    require(n >= 1, "EpisodeConfig: n ", n, " must be >= 1");
    require(q >= 1, "EpisodeConfig: q ", q, " must be >= 1");
    require(static_cast<std::size_t>(m) <= available_classes,
            "EpisodeConfig: m ", m, " exceeds available classes ",
            available_classes);
    require(iterations >= 0, "EpisodeConfig: negative iteration count");
    require(lr > 0.0, "EpisodeConfig: lr must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "EpisodeConfig: momentum ",
            momentum, " outside [0,1)");
  }
};

struct Episode {
  LabeledSet train;
  LabeledSet test;
  std::vector<ClassId> label_space;
};

/// m classes uniformly without replacement, then per class n train plus q
/// test examples uniformly without replacement (train and test disjoint).
inline Episode sample_episode(const LabeledSet& meta_set,
                              const EpisodeConfig& cfg, Rng& rng) {
  const auto classes = meta_set.classes();
  cfg.validate(classes.size());
  for (ClassId c : classes) {
    const std::size_t have = meta_set.count_of(c);
    require(have >= static_cast<std::size_t>(cfg.n + cfg.q),
            "sample_episode: class ", c, " has ", have, " examples, needs ",
            cfg.n + cfg.q, " (n=", cfg.n, " + q=", cfg.q, ")");
  }

  // class subset: partial Fisher-Yates over the class list
  std::vector<ClassId> pool = classes;
  Episode ep;
  for (int k = 0; k < cfg.m; ++k) {
    const std::size_t j = k + rng.uniform_index(pool.size() - static_cast<std::size_t>(k));
    std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
    ep.label_space.push_back(pool[static_cast<std::size_t>(k)]);
  }
  std::sort(ep.label_space.begin(), ep.label_space.end());

  const int shots =
      cfg.variable_shot ? 1 + static_cast<int>(rng.uniform_index(
                                  static_cast<std::size_t>(cfg.n)))
                        : cfg.n;

  for (ClassId c : ep.label_space) {
    auto idx = meta_set.indices_of(c);
    for (std::size_t k = 0; k < static_cast<std::size_t>(shots + cfg.q); ++k) {
      const std::size_t j = k + rng.uniform_index(idx.size() - k);
      std::swap(idx[k], idx[j]);
    }
    for (int k = 0; k < shots; ++k)
      ep.train.examples.push_back(meta_set.examples[idx[static_cast<std::size_t>(k)]]);
    for (int k = 0; k < cfg.q; ++k)
      ep.test.examples.push_back(
          meta_set.examples[idx[static_cast<std::size_t>(shots + k)]]);
  }
  return ep;
}

struct TrainLogRow {
  int iteration = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double gnorm_phi = 0.0;
  double gnorm_g = 0.0;
  double gnorm_f = 0.0;
  double gnorm_G = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  int stopped_at = 0;         // iterations actually run
  double best_holdout = 0.0;  // best held-out episode loss seen

  static void stream_header(std::ostream& os) {
    os << "iteration,loss,accuracy,gnorm_phi,gnorm_g,gnorm_f,gnorm_G\n";
  }

  static void stream_row(std::ostream& os, const TrainLogRow& r) {
    os << r.iteration << ',' << r.loss << ',' << r.accuracy << ','
       << r.gnorm_phi << ',' << r.gnorm_g << ',' << r.gnorm_f << ','
       << r.gnorm_G << '\n';
  }
};

namespace detail {

struct EpisodeForward {
  double loss = 0.0;
  double accuracy = 0.0;
  Value loss_node{};
};

// forward pass of one episode, with augmentation; backward optional
inline EpisodeForward episode_forward(Tape& tape, const TapeBinding& binding,
                                      const ModelSpec& model,
                                      const AugmentationPolicy& policy,
                                      const AugmentContext& ctx,
                                      const Episode& ep, Rng& rng) {
  EpisodeNodes nodes;
  nodes.label_space = ep.label_space;
  for (const auto& e : ep.train.examples) {
    nodes.train_features.push_back(tape.leaf(Tensor::vec(e.features)));
    nodes.train_labels.push_back(e.label);
  }
  augment_episode_nodes(tape, binding, policy, ctx, ep.train, nodes, rng);
  for (const auto& e : ep.test.examples)
    nodes.query_features.push_back(tape.leaf(Tensor::vec(e.features)));

  auto probs = classify_probs(tape, binding, model, nodes);
  std::vector<Value> losses;
  losses.reserve(probs.size());
  int hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const ClassId truth = ep.test.examples[i].label;
    losses.push_back(
        cross_entropy_loss(tape, probs[i], nodes.label_space, truth));
    const auto& p = tape.value(probs[i]);
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    hits += nodes.label_space[best] == truth ? 1 : 0;
  }
  EpisodeForward out;
  out.loss_node = tape.mean_all(tape.concat(losses));
  out.loss = tape.value(out.loss_node).scalar_value();
  out.accuracy = static_cast<double>(hits) / static_cast<double>(probs.size());
  return out;
}

}  // namespace detail

/// Parameter initialization for one training configuration. The learned
/// hallucinator starts at the identity blocks; the untrained-G ablation gets
/// a random frozen G; deterministic-G expects trained weights from elsewhere
/// (falling back to frozen identity blocks when none are supplied).
inline ParamStore init_params_for(const ModelSpec& model,
                                  const AugmentationPolicy& policy,
                                  std::uint64_t seed) {
  ModelSpec m = model;
  m.has_hallucinator = policy.uses_g();
  ParamStore store = init_model_params(m, seed);
  if (policy.kind == PolicyKind::untrained_g) {
    // replace the identity blocks with a random, frozen G
    ParamStore fresh(store.rng_seed());
    Rng rng(mix_seed(seed, 0x6715));
    for (auto& [name, e] : store)
      if (name.rfind("G.", 0) != 0) fresh.add(name, e.value, e.trainable);
    init_hallucinator_random(fresh, m.g_spec(), "G", rng, /*trainable=*/false);
    return fresh;
  }
  if (policy.kind == PolicyKind::deterministic_g)
    for (auto& [name, e] : store)
      if (name.rfind("G.", 0) == 0) e.trainable = false;
  return store;
}

struct MetaTrainResult {
  ParamStore params;
  TrainLog log;
};

/// The episodic loop: sample an episode, augment its training set per the
/// policy, classify the test set, back-propagate the mean cross-entropy
/// through the classifier and (for learned-G) the hallucinator, and step.
/// Stops early when the held-out episode loss stops improving.
inline MetaTrainResult meta_train(const LabeledSet& meta_set,
                                  const ModelSpec& model,
                                  const AugmentationPolicy& policy,
                                  const EpisodeConfig& cfg,
                                  std::ostream* log_stream = nullptr,
                                  const ParamStore* initial = nullptr) {
  model.validate();
  policy.validate();
  cfg.validate(meta_set.classes().size());
  require(model.feature_dim == meta_set.feature_dim(),
          "meta_train: model dim ", model.feature_dim, " != data dim ",
          meta_set.feature_dim());

  MetaTrainResult result;
  result.params = initial ? *initial : init_params_for(model, policy, cfg.seed);
  ModelSpec m = model;
  m.has_hallucinator = policy.uses_g();

  GaussianStats stats;
  AugmentContext ctx;
  if (policy.kind == PolicyKind::gaussian) {
    stats = estimate_gaussian_stats(meta_set, policy.gaussian_shared);
    ctx.stats = &stats;
  }
  if (policy.uses_g()) {
    ctx.store = &result.params;
    ctx.g_spec = m.g_spec();
  }

  Rng master(cfg.seed);
  Rng episode_rng = master.split(0xE01);
  Rng holdout_rng = master.split(0x601D);

  // fixed held-out episodes for the stopping criterion
  std::vector<Episode> holdout;
  if (cfg.eval_interval > 0 && cfg.patience > 0) {
    for (int i = 0; i < cfg.holdout_episodes; ++i)
      holdout.push_back(sample_episode(meta_set, cfg, holdout_rng));
  }
  auto holdout_loss = [&](int at_iteration) {
    double total = 0.0;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
      // same hallucination draw every evaluation, for comparability
      Rng eval_rng(mix_seed(cfg.seed, 0xEA10 + i));
      Tape tape;
      TapeBinding binding(tape, result.params);
      total += detail::episode_forward(tape, binding, m, policy, ctx,
                                       holdout[i], eval_rng)
                   .loss;
    }
    (void)at_iteration;
    return total / static_cast<double>(holdout.size());
  };

  if (log_stream) TrainLog::stream_header(*log_stream);

  double best = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Episode ep = sample_episode(meta_set, cfg, episode_rng);
    Tape tape;
    TapeBinding binding(tape, result.params);
    auto fwd =
        detail::episode_forward(tape, binding, m, policy, ctx, ep, episode_rng);
    if (!std::isfinite(fwd.loss)) {
      std::ostringstream diag;
      diag << "meta_train: non-finite loss at iteration " << iter
           << "; parameter norms:";
      for (const auto& [name, e] : result.params)
        diag << " " << name << "=" << e.value.norm();
      throw std::runtime_error(diag.str());
    }
    tape.backward(fwd.loss_node);
    binding.collect_grads(result.params);

    TrainLogRow row;
    row.iteration = iter;
    row.loss = fwd.loss;
    row.accuracy = fwd.accuracy;
    row.gnorm_phi = result.params.grad_norm("phi.");
    row.gnorm_g = result.params.grad_norm("g.");
    row.gnorm_f = result.params.grad_norm("f.");
    row.gnorm_G = result.params.grad_norm("G.");
    result.log.rows.push_back(row);
    if (log_stream) TrainLog::stream_row(*log_stream, row);

    sgd_step(result.params, cfg.lr, cfg.momentum);
    result.log.stopped_at = iter + 1;

    if (!holdout.empty() && (iter + 1) % cfg.eval_interval == 0) {
      const double hl = holdout_loss(iter);
      if (hl < best - 1e-9) {
        best = hl;
        best_iter = iter;
      } else if (iter - best_iter >= cfg.patience) {
        break;
      }
    }
  }
  result.log.best_holdout = best;
  return result;
}

/// Meta-testing: builds the test-time training set for the requested label
/// space (novel classes from the few-shot set, base classes capped), then
/// augments under-populated classes with the frozen hallucinator and runs
/// the classifier. Hallucinator parameters are never modified here.
inline LabeledSet build_test_train_set(const LabeledSet& novel_train,
                                       const LabeledSet& base_train,
                                       const std::vector<ClassId>& label_space,
                                       int base_cap) {
  LabeledSet out;
  for (ClassId c : label_space) {
    auto idx = novel_train.indices_of(c);
    if (!idx.empty()) {
      for (std::size_t i : idx) out.examples.push_back(novel_train.examples[i]);
      continue;
    }
    idx = base_train.indices_of(c);
    require(!idx.empty(), "meta_test: label-space class ", c,
            " has no training data");
    const std::size_t cap =
        base_cap > 0 ? std::min<std::size_t>(idx.size(),
                                             static_cast<std::size_t>(base_cap))
                     : idx.size();
    for (std::size_t i = 0; i < cap; ++i)
      out.examples.push_back(base_train.examples[idx[i]]);
  }
  return out;
}

inline std::vector<ProbabilityVector> meta_test_classify(
    const ParamStore& params, const ModelSpec& model,
    const AugmentationPolicy& policy, const AugmentContext& ctx_in,
    const LabeledSet& novel_train, const LabeledSet& base_train,
    const std::vector<std::vector<double>>& queries,
    const std::vector<ClassId>& label_space, int base_cap, Rng& rng) {
  AugmentContext ctx = ctx_in;
  ModelSpec m = model;
  m.has_hallucinator = policy.uses_g();
  if (policy.uses_g() && ctx.store == nullptr) {
    ctx.store = &params;
    ctx.g_spec = m.g_spec();
  }
  LabeledSet train =
      build_test_train_set(novel_train, base_train, label_space, base_cap);
  LabeledSet augmented = augment(policy, ctx, train, rng);
  return classify(params, m, augmented, queries, label_space);
}

inline std::vector<ScoreVector> meta_test_scores(
    const ParamStore& params, const ModelSpec& model,
    const AugmentationPolicy& policy, const AugmentContext& ctx_in,
    const LabeledSet& novel_train, const LabeledSet& base_train,
    const std::vector<std::vector<double>>& queries,
    const std::vector<ClassId>& label_space, int base_cap, Rng& rng) {
  AugmentContext ctx = ctx_in;
  ModelSpec m = model;
  m.has_hallucinator = policy.uses_g();
  if (policy.uses_g() && ctx.store == nullptr) {
    ctx.store = &params;
    ctx.g_spec = m.g_spec();
  }
  LabeledSet train =
      build_test_train_set(novel_train, base_train, label_space, base_cap);
  LabeledSet augmented = augment(policy, ctx, train, rng);
  return classify_scores(params, m, augmented, queries, label_space);
}

// --- config files -----------------------------------------------------------

/// Line-oriented `key = value` pairs; '#' starts a comment.
inline std::map<std::string, std::string> parse_config(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "config line ", lineno,
            ": expected key = value, got \"", trim(line), "\"");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), "config line ", lineno, ": empty key");
    out[key] = value;
  }
  return out;
}

}  // namespace lowshot
