#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "lowshot/checkpoint.hpp"
#include "lowshot/nets.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace lowshot;
namespace ts = lowshot::testsupport;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Pulls a tape-format LSTM cell out of a store into the reference layout.
ts::RefLstmWeights ref_weights_from_store(const ParamStore& store,
                                          const std::string& prefix) {
  auto mat = [&](const std::string& name) {
    const Tensor& t = store.value(name);
    std::vector<std::vector<double>> out(
        static_cast<std::size_t>(t.shape().rows()),
        std::vector<double>(static_cast<std::size_t>(t.shape().cols())));
    for (int i = 0; i < t.shape().rows(); ++i)
      for (int j = 0; j < t.shape().cols(); ++j)
        out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = t.at(i, j);
    return out;
  };
  ts::RefLstmWeights w;
  w.Wi = mat(prefix + ".Wi");
  w.Wf = mat(prefix + ".Wf");
  w.Wo = mat(prefix + ".Wo");
  w.Wu = mat(prefix + ".Wu");
  w.bi = store.value(prefix + ".bi").values();
  w.bf = store.value(prefix + ".bf").values();
  w.bo = store.value(prefix + ".bo").values();
  w.bu = store.value(prefix + ".bu").values();
  return w;
}

ParamStore zero_weight_cells(const LstmCellSpec& spec,
                             const std::vector<std::string>& prefixes) {
  ParamStore store;
  for (const auto& p : prefixes) {
    for (const char* g : {"i", "f", "o", "u"}) {
      store.add(p + ".W" + g,
                Tensor::zeros(Shape::mat(spec.joint_dim(), spec.hidden_dim)));
      Tensor b = Tensor::zeros(Shape::vec(spec.hidden_dim));
      if (g[0] == 'f') b.fill(1.0);
      store.add(p + ".b" + g, b);
    }
  }
  return store;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("single identity layer passes input through") {
  MlpSpec spec{{3, 3}, false};
  ParamStore store;
  store.add("phi.W0", Tensor::identity(3));
  store.add("phi.b0", Tensor::zeros(Shape::vec(3)));

  Tape tape;
  TapeBinding binding(tape, store);
  Value x = tape.leaf(Tensor::mat(2, 3, {1, -2, 3, 0, 5, -6}));
  Value y = mlp_forward(tape, binding, spec, "phi", x);
  CHECK(tape.value(y) == Tensor::mat(2, 3, {1, -2, 3, 0, 5, -6}));

  spec.final_relu = true;
  Value yr = mlp_forward(tape, binding, spec, "phi", x);
  CHECK(tape.value(yr) == Tensor::mat(2, 3, {1, 0, 3, 0, 5, 0}));
}

TEST_CASE("mlp rejects width mismatch") {
  MlpSpec spec{{3, 2}, false};
  Rng rng(1);
  ParamStore store;
  init_mlp(store, spec, "phi", rng);
  Tape tape;
  TapeBinding binding(tape, store);
  Value x = tape.leaf(Tensor::vec({1, 2}));
  CHECK_THROWS_AS(mlp_forward(tape, binding, spec, "phi", x),
                  std::invalid_argument);
}

TEST_CASE("mlp gradient matches finite differences") {
  MlpSpec spec{{4, 5, 3}, false};
  Rng rng(5);
  ParamStore store;
  init_mlp(store, spec, "phi", rng);
  const Tensor input = random_tensor(Shape::mat(2, 4), rng);

  auto forward = [&](const ParamStore& s) {
    Tape tape;
    TapeBinding binding(tape, s);
    Value y = mlp_forward(tape, binding, spec, "phi", tape.leaf(input));
    // fixed weights keep every output coordinate in play
    Tensor w(Shape::mat(2, 3));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * (1.0 + static_cast<double>(i));
    return tape.value(tape.sum_all(tape.mul(y, tape.leaf(w)))).scalar_value();
  };
  {
    Tape tape;
    TapeBinding binding(tape, store);
    Value y = mlp_forward(tape, binding, spec, "phi", tape.leaf(input));
    Tensor w(Shape::mat(2, 3));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * (1.0 + static_cast<double>(i));
    Value loss = tape.sum_all(tape.mul(y, tape.leaf(w)));
    tape.backward(loss);
    binding.collect_grads(store);
  }
  auto rep = ts::check_param_gradients(store, forward);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("bilstm with zero gates reduces to the hand-unrolled trajectory") {
  // W = 0, biases 0 except forget = 1: every gate is constant, the cell
  // state stays 0, so h == 0 throughout and g(x_i) = x_i + 2*0.
  LstmCellSpec spec{3, 3, 3};
  ParamStore store = zero_weight_cells(spec, {"g.fwd", "g.bwd"});
  Tape tape;
  TapeBinding binding(tape, store);
  Value x0 = tape.leaf(Tensor::vec({1, 2, 3}));
  Value x1 = tape.leaf(Tensor::vec({-1, 0.5, 4}));
  auto g = bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", {x0, x1});
  REQUIRE(g.size() == 2);
  CHECK(tape.value(g[0]) == tape.value(x0));
  CHECK(tape.value(g[1]) == tape.value(x1));
}

TEST_CASE("bilstm with constant gates matches a two-step hand unroll") {
  // Zero weights but nonzero biases: gates are input-independent constants,
  // so the hidden trajectory is a closed-form recurrence computed here with
  // plain doubles.
  LstmCellSpec spec{2, 2, 2};
  ParamStore store = zero_weight_cells(spec, {"g.fwd", "g.bwd"});
  for (const char* p : {"g.fwd", "g.bwd"}) {
    store.value(std::string(p) + ".bi").fill(0.3);
    store.value(std::string(p) + ".bo").fill(-0.2);
    store.value(std::string(p) + ".bu").fill(0.7);
  }
  const double gi = ts::ref_sigmoid(0.3);
  const double gf = ts::ref_sigmoid(1.0);
  const double go = ts::ref_sigmoid(-0.2);
  const double gu = std::tanh(0.7);
  const double c1 = gi * gu;
  const double h1 = go * std::tanh(c1);
  const double c2 = gf * c1 + gi * gu;
  const double h2 = go * std::tanh(c2);

  Tape tape;
  TapeBinding binding(tape, store);
  Value x0 = tape.leaf(Tensor::vec({0.4, -1.0}));
  Value x1 = tape.leaf(Tensor::vec({2.0, 0.1}));
  auto g = bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", {x0, x1});
  // forward trajectory h1,h2; backward gives h2',h1' with the same constants
  for (int j = 0; j < 2; ++j) {
    CHECK(tape.value(g[0])[static_cast<std::size_t>(j)] ==
          doctest::Approx(tape.value(x0)[static_cast<std::size_t>(j)] + h1 + h2)
              .epsilon(1e-14));
    CHECK(tape.value(g[1])[static_cast<std::size_t>(j)] ==
          doctest::Approx(tape.value(x1)[static_cast<std::size_t>(j)] + h2 + h1)
              .epsilon(1e-14));
  }
}

TEST_CASE("bilstm forward agrees with the plain reference for random weights") {
  LstmCellSpec spec{4, 4, 4};
  Rng rng(17);
  ParamStore store;
  init_lstm_cell(store, spec, "g.fwd", rng);
  init_lstm_cell(store, spec, "g.bwd", rng);

  std::vector<std::vector<double>> xs = {
      {0.5, -0.2, 1.0, 0.0}, {1.5, 0.3, -0.7, 0.2}, {-0.1, 0.9, 0.4, -1.2}};
  Tape tape;
  TapeBinding binding(tape, store);
  std::vector<Value> inputs;
  for (const auto& x : xs) inputs.push_back(tape.leaf(Tensor::vec(x)));
  auto g = bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", inputs);

  auto wf = ref_weights_from_store(store, "g.fwd");
  auto wb = ref_weights_from_store(store, "g.bwd");
  std::vector<std::vector<double>> h_fwd, h_bwd(xs.size());
  ts::RefLstmState s{std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
  for (const auto& x : xs) {
    s = ts::ref_lstm_step(wf, x, s.h, s.c);
    h_fwd.push_back(s.h);
  }
  s = {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
  for (std::size_t i = xs.size(); i-- > 0;) {
    s = ts::ref_lstm_step(wb, xs[i], s.h, s.c);
    h_bwd[i] = s.h;
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(tape.value(g[i])[j] ==
            doctest::Approx(xs[i][j] + h_fwd[i][j] + h_bwd[i][j]).epsilon(1e-13));
}

TEST_CASE("bilstm handles a single-element sequence and rejects empty input") {
  LstmCellSpec spec{2, 2, 2};
  Rng rng(3);
  ParamStore store;
  init_lstm_cell(store, spec, "g.fwd", rng);
  init_lstm_cell(store, spec, "g.bwd", rng);
  Tape tape;
  TapeBinding binding(tape, store);
  Value x = tape.leaf(Tensor::vec({1.0, -1.0}));
  auto g = bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", {x});
  CHECK(g.size() == 1);
  CHECK(tape.value(g[0]).all_finite());
  CHECK_THROWS_AS(bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", {}),
                  std::invalid_argument);
}

TEST_CASE("bilstm gradients match finite differences") {
  LstmCellSpec spec{3, 3, 3};
  Rng rng(23);
  ParamStore store;
  init_lstm_cell(store, spec, "g.fwd", rng);
  init_lstm_cell(store, spec, "g.bwd", rng);
  std::vector<std::vector<double>> xs = {{0.5, -0.2, 1.0}, {0.1, 0.8, -0.5}};

  auto build = [&](Tape& tape, const TapeBinding& binding) {
    std::vector<Value> inputs;
    for (const auto& x : xs) inputs.push_back(tape.leaf(Tensor::vec(x)));
    auto g = bilstm_embed(tape, binding, spec, "g.fwd", "g.bwd", inputs);
    Value acc = tape.sum_all(g[0]);
    for (std::size_t i = 1; i < g.size(); ++i)
      acc = tape.add(acc, tape.sum_all(tape.mul(g[i], g[i])));
    return acc;
  };
  {
    Tape tape;
    TapeBinding binding(tape, store);
    Value loss = build(tape, binding);
    tape.backward(loss);
    binding.collect_grads(store);
  }
  auto rep = ts::check_param_gradients(store, [&](const ParamStore& s) {
    Tape tape;
    TapeBinding binding(tape, s);
    return tape.value(build(tape, binding)).scalar_value();
  });
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("attlstm read is independent of attention when memory has one slot") {
  LstmCellSpec spec{3, 3, 6};
  Rng rng(31);
  ParamStore store;
  init_lstm_cell(store, spec, "f", rng);
  Tape tape;
  TapeBinding binding(tape, store);
  Value q = tape.leaf(Tensor::vec({0.2, -0.4, 1.0}));
  Value v = tape.leaf(Tensor::vec({1.0, 2.0, 3.0}));
  Value h_single = attlstm_embed(tape, binding, spec, "f", q, {v}, 2);
  Value h_double = attlstm_embed(tape, binding, spec, "f", q, {v, v}, 2);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(tape.value(h_single)[j] ==
          doctest::Approx(tape.value(h_double)[j]).epsilon(1e-14));
}

TEST_CASE("attlstm matches the reference unroll and attention is normalized") {
  LstmCellSpec spec{3, 3, 6};
  Rng rng(37);
  ParamStore store;
  init_lstm_cell(store, spec, "f", rng);
  std::vector<std::vector<double>> memory = {
      {1.0, 0.0, 0.5}, {0.3, -0.8, 0.2}, {0.0, 1.2, -0.4}};
  std::vector<double> query = {0.7, 0.1, -0.3};

  Tape tape;
  TapeBinding binding(tape, store);
  std::vector<Value> mem;
  for (const auto& m : memory) mem.push_back(tape.leaf(Tensor::vec(m)));
  Value h = attlstm_embed(tape, binding, spec, "f", tape.leaf(Tensor::vec(query)),
                          mem, 3);

  auto res = ts::ref_attlstm(ref_weights_from_store(store, "f"), query, memory, 3);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(tape.value(h)[j] == doctest::Approx(res.h[j]).epsilon(1e-13));
  for (const auto& att : res.attention_per_step) {
    double sum = 0.0;
    for (double a : att) {
      CHECK(a >= 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("attlstm rejects empty memory") {
  LstmCellSpec spec{2, 2, 4};
  Rng rng(41);
  ParamStore store;
  init_lstm_cell(store, spec, "f", rng);
  Tape tape;
  TapeBinding binding(tape, store);
  Value q = tape.leaf(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(attlstm_embed(tape, binding, spec, "f", q, {}, 2),
                  std::invalid_argument);
}

TEST_CASE("attlstm gradients match finite differences") {
  LstmCellSpec spec{3, 3, 6};
  Rng rng(43);
  ParamStore store;
  init_lstm_cell(store, spec, "f", rng);
  std::vector<std::vector<double>> memory = {{1.0, 0.0, 0.5}, {0.3, -0.8, 0.2}};
  std::vector<double> query = {0.7, 0.1, -0.3};

  auto build = [&](Tape& tape, const TapeBinding& binding) {
    std::vector<Value> mem;
    for (const auto& m : memory) mem.push_back(tape.leaf(Tensor::vec(m)));
    Value h = attlstm_embed(tape, binding, spec, "f",
                            tape.leaf(Tensor::vec(query)), mem, 2);
    return tape.sum_all(tape.mul(h, h));
  };
  {
    Tape tape;
    TapeBinding binding(tape, store);
    Value loss = build(tape, binding);
    tape.backward(loss);
    binding.collect_grads(store);
  }
  auto rep = ts::check_param_gradients(store, [&](const ParamStore& s) {
    Tape tape;
    TapeBinding binding(tape, s);
    return tape.value(build(tape, binding)).scalar_value();
  });
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("identity-initialized hallucinator copies its seed") {
  HallucinatorSpec spec{4, 4, 4};
  ParamStore store;
  init_hallucinator_identity(store, spec, "G");

  // layer-1 weight in stored [in x out] layout: I_4 on feature rows, zero
  // noise rows -- the transpose of [I | 0]
  const Tensor& w0 = store.value("G.W0");
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(w0.at(i, j) == ((i == j && i < 4) ? 1.0 : 0.0));

  Rng rng(47);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(4), z(4);
    for (auto& v : x) v = rng.uniform(0.0, 5.0);
    for (auto& v : z) v = rng.normal();
    auto out = hallucinate_one(store, spec, "G", x, z);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(std::abs(out[j] - x[j]) < 1e-12);
  }
}

TEST_CASE("identity init requires hidden_dim >= feature_dim") {
  HallucinatorSpec spec{4, 4, 3};
  ParamStore store;
  CHECK_THROWS_AS(init_hallucinator_identity(store, spec, "G"),
                  std::invalid_argument);
}

TEST_CASE("random-init hallucinator does not copy, but stays non-negative") {
  HallucinatorSpec spec{4, 4, 6};
  Rng rng(53);
  ParamStore store;
  init_hallucinator_random(store, spec, "G", rng);
  double total_dev = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4), z(4);
    for (auto& v : x) v = rng.uniform(0.0, 3.0);
    for (auto& v : z) v = rng.normal();
    auto out = hallucinate_one(store, spec, "G", x, z);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out[j] >= 0.0);
      total_dev += std::abs(out[j] - x[j]);
    }
  }
  CHECK(total_dev > 0.0);
}

TEST_CASE("batched hallucination equals per-example hallucination") {
  HallucinatorSpec spec{3, 2, 5};
  Rng rng(59);
  ParamStore store;
  init_hallucinator_random(store, spec, "G", rng);

  Tensor seeds = random_tensor(Shape::mat(4, 3), rng, 0.0, 2.0);
  Tensor noise = random_tensor(Shape::mat(4, 2), rng);
  Tape tape;
  TapeBinding binding(tape, store);
  Value out = hallucinate_rows(tape, binding, spec, "G", tape.leaf(seeds),
                               tape.leaf(noise));
  for (int r = 0; r < 4; ++r) {
    std::vector<double> x(3), z(2);
    for (int j = 0; j < 3; ++j) x[static_cast<std::size_t>(j)] = seeds.at(r, j);
    for (int j = 0; j < 2; ++j) z[static_cast<std::size_t>(j)] = noise.at(r, j);
    auto one = hallucinate_one(store, spec, "G", x, z);
    for (int j = 0; j < 3; ++j)
      CHECK(tape.value(out).at(r, j) == doctest::Approx(one[static_cast<std::size_t>(j)]).epsilon(1e-14));
  }
}

TEST_CASE("hallucinator gradient w.r.t. its weights matches finite differences") {
  // Identity init plus a small perturbation keeps every ReLU pre-activation
  // bounded away from the kink, where finite differences are meaningless.
  HallucinatorSpec spec{3, 3, 4};
  Rng rng(61);
  ParamStore store;
  init_hallucinator_identity(store, spec, "G");
  for (auto& [name, e] : store)
    for (std::size_t i = 0; i < e.value.size(); ++i)
      e.value[i] += rng.uniform(0.005, 0.02);
  const std::vector<double> x = {0.5, 1.5, 0.7};
  const std::vector<double> z = {0.3, 0.9, 1.1};

  auto build = [&](Tape& tape, const TapeBinding& binding) {
    Value out = hallucinate_value(tape, binding, spec, "G",
                                  tape.leaf(Tensor::vec(x)),
                                  tape.leaf(Tensor::vec(z)));
    return tape.sum_all(tape.mul(out, out));  // squared norm
  };
  {
    Tape tape;
    TapeBinding binding(tape, store);
    Value loss = build(tape, binding);
    tape.backward(loss);
    binding.collect_grads(store);
  }
  auto rep = ts::check_param_gradients(store, [&](const ParamStore& s) {
    Tape tape;
    TapeBinding binding(tape, s);
    return tape.value(build(tape, binding)).scalar_value();
  });
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(67);
  ParamStore store(123456789ULL);
  store.add("phi.W0", random_tensor(Shape::mat(3, 4), rng));
  store.add("phi.b0", random_tensor(Shape::vec(4), rng));
  store.add("G.W0", random_tensor(Shape::mat(6, 5), rng), /*trainable=*/false);
  store.add("scalar", Tensor::scalar(3.14159));

  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, store);
  ParamStore loaded = load_checkpoint(path);
  CHECK(loaded.rng_seed() == store.rng_seed());
  CHECK(loaded.size() == store.size());
  for (const auto& [name, e] : store) {
    CHECK(loaded.value(name) == e.value);
    CHECK(loaded.entry(name).trainable == e.trainable);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint load rejects corruption") {
  Rng rng(71);
  ParamStore store;
  store.add("w", random_tensor(Shape::mat(4, 4), rng));
  const std::string path = "ckpt_corrupt.bin";
  save_checkpoint(path, store);

  // truncate
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 16);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  // bad magic
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPTxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
