#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "lowshot/episodes.hpp"
#include "lowshot/hallucination.hpp"

using namespace lowshot;

namespace {

LabeledSet three_class_singletons() {
  LabeledSet s;
  s.add({1.0, 0.0}, 0);
  s.add({0.0, 1.0}, 1);
  s.add({2.0, 2.0}, 2);
  return s;
}

AugmentContext identity_g_context(const ParamStore& store,
                                  const HallucinatorSpec& spec) {
  AugmentContext ctx;
  ctx.store = &store;
  ctx.g_spec = spec;
  return ctx;
}

}  // namespace

TEST_SUITE("hallucination") {

TEST_CASE("saturated classes are untouched") {
  AugmentationPolicy policy;
  policy.kind = PolicyKind::dropout;
  policy.n_aug = 2;
  LabeledSet train;
  train.add({1.0, 2.0}, 0);
  train.add({3.0, 4.0}, 0);
  train.add({5.0, 6.0}, 0);
  Rng rng(1);
  LabeledSet out = augment(policy, {}, train, rng);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.examples[i].features == train.examples[i].features);
    CHECK_FALSE(out.examples[i].synthetic);
  }
}

TEST_CASE("counting: 1 real, n_aug 5, 3 classes gives 4 synthetic per class") {
  HallucinatorSpec gspec{2, 2, 2};
  ParamStore store;
  init_hallucinator_identity(store, gspec, "G");
  AugmentationPolicy policy;
  policy.kind = PolicyKind::learned_g;
  policy.n_aug = 5;
  Rng rng(2);
  LabeledSet out =
      augment(policy, identity_g_context(store, gspec), three_class_singletons(), rng);
  CHECK(out.size() == 15);
  for (ClassId c = 0; c < 3; ++c) {
    CHECK(out.count_of(c) == 5);
    std::size_t synthetic = 0;
    for (const auto& e : out.examples)
      if (e.label == c && e.synthetic) ++synthetic;
    CHECK(synthetic == 4);
  }
}

TEST_CASE("learned-G at identity init copies the single seed") {
  HallucinatorSpec gspec{2, 2, 2};
  ParamStore store;
  init_hallucinator_identity(store, gspec, "G");
  AugmentationPolicy policy;
  policy.kind = PolicyKind::learned_g;
  policy.n_aug = 4;
  Rng rng(3);
  LabeledSet train = three_class_singletons();
  LabeledSet out = augment(policy, identity_g_context(store, gspec), train, rng);
  for (const auto& e : out.examples) {
    const auto& seed = train.examples[e.label].features;
    for (std::size_t j = 0; j < seed.size(); ++j)
      CHECK(std::abs(e.features[j] - seed[j]) < 1e-12);
  }
}

TEST_CASE("augment rejects a class with zero examples upstream") {
  AugmentationPolicy policy;
  policy.kind = PolicyKind::dropout;
  policy.n_aug = 3;
  LabeledSet train;
  train.add({1.0}, 0);
  train.examples[0].synthetic = true;  // no real seed available
  Rng rng(4);
  CHECK_THROWS_AS(augment(policy, {}, train, rng), std::invalid_argument);
}

TEST_CASE("gaussian stats: identical features give zero variance and exact copies") {
  LabeledSet base;
  for (int i = 0; i < 5; ++i) base.add({2.0, 3.0}, 0);
  GaussianStats stats = estimate_gaussian_stats(base, true);
  CHECK(stats.var == std::vector<double>{0.0, 0.0});

  Rng rng(5);
  auto out = gen_gaussian({2.0, 3.0}, stats.var, rng);
  CHECK(out == std::vector<double>{2.0, 3.0});
}

TEST_CASE("gaussian stats: two points 0 and 2 give mean 1, unbiased variance 2") {
  LabeledSet base;
  base.add({0.0}, 0);
  base.add({2.0}, 0);
  GaussianStats stats = estimate_gaussian_stats(base, true);
  CHECK(stats.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(stats.var[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("shared stats match an independent single-pass reference") {
  Rng rng(6);
  LabeledSet base;
  for (ClassId c = 0; c < 3; ++c)
    for (int i = 0; i < 7; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = rng.uniform(0.0, 3.0) + c;
      base.add(x, c);
    }
  GaussianStats stats = estimate_gaussian_stats(base, true);

  // reference: single pass accumulating sum and sum of squares
  const std::size_t n = base.size();
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0, s2 = 0.0;
    for (const auto& e : base.examples) {
      s += e.features[j];
      s2 += e.features[j] * e.features[j];
    }
    const double mean = s / static_cast<double>(n);
    const double var =
        (s2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    CHECK(std::abs(stats.mean[j] - mean) < 1e-10);
    CHECK(std::abs(stats.var[j] - var) < 1e-10);
  }
}

TEST_CASE("per-class stats need at least two examples per class") {
  LabeledSet base;
  base.add({1.0}, 0);
  base.add({2.0}, 0);
  base.add({1.0}, 1);  // singleton class
  CHECK_THROWS_AS(estimate_gaussian_stats(base, false), std::invalid_argument);
}

TEST_CASE("ablation generators: degenerate cases") {
  Rng rng(7);
  // gaussian with zero variance
  CHECK(gen_gaussian({1.0, 2.0}, {0.0, 0.0}, rng) ==
        std::vector<double>{1.0, 2.0});
  // dropout rate 0
  CHECK(gen_dropout({1.0, 2.0}, 0.0, rng) == std::vector<double>{1.0, 2.0});
  // weighted average of x with itself
  for (int i = 0; i < 5; ++i)
    CHECK(gen_weighted_average({1.5, 0.5}, {1.5, 0.5}, rng) ==
          std::vector<double>{1.5, 0.5});
  // dropout rate outside [0,1)
  CHECK_THROWS_AS(gen_dropout({1.0}, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(gen_dropout({1.0}, -0.1, rng), std::invalid_argument);
}

TEST_CASE("augmented sets keep real examples verbatim and features non-negative") {
  Rng data_rng(8);
  LabeledSet train;
  for (ClassId c = 0; c < 4; ++c)
    for (int i = 0; i < 2; ++i) {
      std::vector<double> x(3);
      for (auto& v : x) v = data_rng.uniform(0.0, 2.0);
      train.add(x, c);
    }
  GaussianStats stats = estimate_gaussian_stats(train, true);

  for (PolicyKind kind : {PolicyKind::gaussian, PolicyKind::dropout,
                          PolicyKind::weighted_average, PolicyKind::untrained_g,
                          PolicyKind::deterministic_g, PolicyKind::learned_g}) {
    CAPTURE(policy_name(kind));
    AugmentationPolicy policy;
    policy.kind = kind;
    policy.n_aug = 6;

    HallucinatorSpec gspec{3, 3, 4};
    ParamStore store;
    if (kind == PolicyKind::untrained_g) {
      Rng grng(9);
      init_hallucinator_random(store, gspec, "G", grng, false);
    } else {
      init_hallucinator_identity(store, gspec, "G");
    }
    AugmentContext ctx;
    ctx.store = &store;
    ctx.g_spec = gspec;
    ctx.stats = &stats;

    Rng rng(10);
    LabeledSet out = augment(policy, ctx, train, rng);
    // exact counts
    for (ClassId c = 0; c < 4; ++c) CHECK(out.count_of(c) == 6);
    // real examples bit-identical, in order
    for (std::size_t i = 0; i < train.size(); ++i) {
      CHECK(out.examples[i].features == train.examples[i].features);
      CHECK(out.examples[i].label == train.examples[i].label);
      CHECK_FALSE(out.examples[i].synthetic);
    }
    // synthetic flags and the feature domain
    for (std::size_t i = train.size(); i < out.size(); ++i) {
      CHECK(out.examples[i].synthetic);
      for (double v : out.examples[i].features) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("identical master seeds give identical augmented sets") {
  LabeledSet train = three_class_singletons();
  GaussianStats stats;
  stats.shared = true;
  stats.var = {0.25, 0.25};
  stats.mean = {0.0, 0.0};
  AugmentContext ctx;
  ctx.stats = &stats;
  AugmentationPolicy policy;
  policy.kind = PolicyKind::gaussian;
  policy.n_aug = 7;

  Rng r1(42), r2(42);
  LabeledSet a = augment(policy, ctx, train, r1);
  LabeledSet b = augment(policy, ctx, train, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.examples[i].features == b.examples[i].features);
}

TEST_CASE("gradients reach w_G under learned-G and no ablation touches it") {
  ModelSpec model;
  model.kind = LearnerKind::pn;
  model.feature_dim = 3;
  model.embed_dim = 3;
  model.has_hallucinator = true;

  LabeledSet train;
  train.add({1.0, 0.2, 0.1}, 0);
  train.add({0.1, 1.0, 0.4}, 1);
  LabeledSet test;
  test.add({0.9, 0.3, 0.2}, 0);
  test.add({0.2, 0.9, 0.5}, 1);
  Episode ep{train, test, {0, 1}};

  auto grad_G_norm = [&](PolicyKind kind) {
    AugmentationPolicy policy;
    policy.kind = kind;
    policy.n_aug = 4;
    ParamStore store = init_params_for(model, policy, 123);
    // perturb G away from the exact identity so its gradient is generic
    if (store.has("G.W0"))
      for (auto& [name, e] : store)
        if (name.rfind("G.", 0) == 0) {
          Rng prng(7);
          for (std::size_t i = 0; i < e.value.size(); ++i)
            e.value[i] += prng.uniform(0.001, 0.01);
        }
    GaussianStats stats = estimate_gaussian_stats(train, true);
    AugmentContext ctx;
    ctx.stats = &stats;
    if (policy.uses_g()) {
      ctx.store = &store;
      ctx.g_spec = model.g_spec();
    }
    Rng rng(11);
    Tape tape;
    TapeBinding binding(tape, store);
    auto fwd = detail::episode_forward(tape, binding, model, policy, ctx, ep, rng);
    tape.backward(fwd.loss_node);
    binding.collect_grads(store);
    return store.grad_norm("G.");
  };

  CHECK(grad_G_norm(PolicyKind::learned_g) > 1e-10);
  CHECK(grad_G_norm(PolicyKind::deterministic_g) == 0.0);
  CHECK(grad_G_norm(PolicyKind::untrained_g) == 0.0);
}

TEST_CASE("export writes class, synthetic flag and features") {
  LabeledSet s;
  s.add({1.5, 0.25}, 3);
  s.add({0.5, 2.0}, 4, true);
  std::ostringstream os;
  export_examples(os, s);
  CHECK(os.str() ==
        "class,synthetic,f0,f1\n"
        "3,0,1.5,0.25\n"
        "4,1,0.5,2\n");
}

}  // TEST_SUITE
