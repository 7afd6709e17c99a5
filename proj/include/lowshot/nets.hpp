#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/diffgraph.hpp"
#include "lowshot/params.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

// Weight matrices are stored input-major ([in x out]), so a batch forward is
// X [n x in] . W, and a single vector goes through matvec_t.

struct MlpSpec {
  std::vector<int> layer_dims;  // [in, hidden..., out]
  bool final_relu = false;

  int layers() const { return static_cast<int>(layer_dims.size()) - 1; }
  int in_dim() const { return layer_dims.front(); }
  int out_dim() const { return layer_dims.back(); }

  void validate() const {
    require(layer_dims.size() >= 2, "MlpSpec: needs at least one layer");
    for (int d : layer_dims) require(d >= 1, "MlpSpec: dim ", d, " invalid");
  }
};

struct LstmCellSpec {
  int input_dim = 0;
  int hidden_dim = 0;
  int recur_dim = 0;  // width of the recurrent input ([h] or [h; r])

  int joint_dim() const { return input_dim + recur_dim; }
};

struct HallucinatorSpec {
  int feature_dim = 0;  // d
  int noise_dim = 0;    // d_z
  int hidden_dim = 0;

  void validate() const {
    require(feature_dim >= 1 && noise_dim >= 1 && hidden_dim >= 1,
            "HallucinatorSpec: dims must be positive (d=", feature_dim,
            ", d_z=", noise_dim, ", hidden=", hidden_dim, ")");
  }
};

// --- initialization -------------------------------------------------------

inline Tensor scaled_uniform(const Shape& shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-bound, bound);
  return t;
}

inline void init_mlp(ParamStore& store, const MlpSpec& spec,
                     const std::string& prefix, Rng& rng) {
  spec.validate();
  for (int l = 0; l < spec.layers(); ++l) {
    const int in = spec.layer_dims[static_cast<std::size_t>(l)];
    const int out = spec.layer_dims[static_cast<std::size_t>(l) + 1];
    store.add(prefix + ".W" + std::to_string(l),
              scaled_uniform(Shape::mat(in, out), in, rng));
    store.add(prefix + ".b" + std::to_string(l), Tensor::zeros(Shape::vec(out)));
  }
}

// Four gates (input, forget, output, candidate); forget bias starts at 1.
inline void init_lstm_cell(ParamStore& store, const LstmCellSpec& spec,
                           const std::string& prefix, Rng& rng) {
  require(spec.input_dim >= 1 && spec.hidden_dim >= 1 && spec.recur_dim >= 1,
          "LstmCellSpec: dims must be positive");
  const int joint = spec.joint_dim();
  for (const char* gate : {"i", "f", "o", "u"}) {
    store.add(prefix + ".W" + gate,
              scaled_uniform(Shape::mat(joint, spec.hidden_dim), joint, rng));
    Tensor b = Tensor::zeros(Shape::vec(spec.hidden_dim));
    if (gate[0] == 'f') b.fill(1.0);
    store.add(prefix + ".b" + gate, b);
  }
}

inline void init_hallucinator_random(ParamStore& store,
                                     const HallucinatorSpec& spec,
                                     const std::string& prefix, Rng& rng,
                                     bool trainable = true) {
  spec.validate();
  const int in0 = spec.feature_dim + spec.noise_dim;
  store.add(prefix + ".W0",
            scaled_uniform(Shape::mat(in0, spec.hidden_dim), in0, rng), trainable);
  store.add(prefix + ".b0", Tensor::zeros(Shape::vec(spec.hidden_dim)), trainable);
  store.add(prefix + ".W1",
            scaled_uniform(Shape::mat(spec.hidden_dim, spec.hidden_dim),
                           spec.hidden_dim, rng),
            trainable);
  store.add(prefix + ".b1", Tensor::zeros(Shape::vec(spec.hidden_dim)), trainable);
  store.add(prefix + ".W2",
            scaled_uniform(Shape::mat(spec.hidden_dim, spec.feature_dim),
                           spec.hidden_dim, rng),
            trainable);
  store.add(prefix + ".b2", Tensor::zeros(Shape::vec(spec.feature_dim)), trainable);
}

/// Block-diagonal identity initialization: the composed network copies its
/// seed example, G(x, z) = x for every x >= 0, regardless of z.
inline void init_hallucinator_identity(ParamStore& store,
                                       const HallucinatorSpec& spec,
                                       const std::string& prefix,
                                       bool trainable = true) {
  spec.validate();
  require(spec.hidden_dim >= spec.feature_dim,
          "init_identity_blocks: hidden_dim ", spec.hidden_dim,
          " < feature_dim ", spec.feature_dim,
          ", identity block cannot fit");
  const int d = spec.feature_dim;
  const int h = spec.hidden_dim;
  const int in0 = d + spec.noise_dim;

  Tensor w0(Shape::mat(in0, h));  // feature rows carry I_d, noise rows stay 0
  for (int i = 0; i < d; ++i) w0.at(i, i) = 1.0;
  Tensor w1(Shape::mat(h, h));
  for (int i = 0; i < h; ++i) w1.at(i, i) = 1.0;
  Tensor w2(Shape::mat(h, d));
  for (int i = 0; i < d; ++i) w2.at(i, i) = 1.0;

  store.add(prefix + ".W0", std::move(w0), trainable);
  store.add(prefix + ".b0", Tensor::zeros(Shape::vec(h)), trainable);
  store.add(prefix + ".W1", std::move(w1), trainable);
  store.add(prefix + ".b1", Tensor::zeros(Shape::vec(h)), trainable);
  store.add(prefix + ".W2", std::move(w2), trainable);
  store.add(prefix + ".b2", Tensor::zeros(Shape::vec(d)), trainable);
}

// --- forward passes -------------------------------------------------------

/// Alternating affine + ReLU; a final ReLU only when the spec asks for it.
/// Accepts a batch matrix [n x in] or a single vector [in].
inline Value mlp_forward(Tape& tape, const TapeBinding& binding,
                         const MlpSpec& spec, const std::string& prefix,
                         Value x) {
  spec.validate();
  const Shape& xs = tape.value(x).shape();
  const bool batch = xs.rank() == 2;
  const int width = batch ? xs.cols() : xs.dim(0);
  require(width == spec.in_dim(), "mlp_forward: input width ", width,
          " does not match first layer dim ", spec.in_dim());
  Value h = x;
  for (int l = 0; l < spec.layers(); ++l) {
    Value w = binding[prefix + ".W" + std::to_string(l)];
    Value b = binding[prefix + ".b" + std::to_string(l)];
    h = batch ? tape.add_rowvec(tape.matmul(h, w), b)
              : tape.add(tape.matvec_t(w, h), b);
    if (l + 1 < spec.layers() || spec.final_relu) h = tape.relu(h);
  }
  return h;
}

struct LstmState {
  Value h;
  Value c;
};

/// One LSTM cell step. `recur` is the recurrent input vector; for a plain
/// chain it is the previous h, for the attention LSTM it is [h; r].
inline LstmState lstm_cell_step(Tape& tape, const TapeBinding& binding,
                                const LstmCellSpec& spec,
                                const std::string& prefix, Value input,
                                Value recur, Value cell) {
  Value joint = tape.concat({input, recur});
  auto gate = [&](const char* g) {
    return tape.add(tape.matvec_t(binding[prefix + ".W" + g], joint),
                    binding[prefix + ".b" + g]);
  };
  Value i = tape.sigmoid(gate("i"));
  Value f = tape.sigmoid(gate("f"));
  Value o = tape.sigmoid(gate("o"));
  Value u = tape.tanh_(gate("u"));
  Value c_new = tape.add(tape.mul(f, cell), tape.mul(i, u));
  Value h_new = tape.mul(o, tape.tanh_(c_new));
  return {h_new, c_new};
}

/// Contextual embedding of a (canonically ordered) example sequence:
/// g(x_i) = h_fwd(i) + h_bwd(i) + x_i, where the inputs are already the
/// per-example embeddings phi(x_i).
inline std::vector<Value> bilstm_embed(Tape& tape, const TapeBinding& binding,
                                       const LstmCellSpec& spec,
                                       const std::string& fwd_prefix,
                                       const std::string& bwd_prefix,
                                       const std::vector<Value>& inputs) {
  require(!inputs.empty(), "bilstm_embed: empty input sequence");
  const int d = tape.value(inputs[0]).shape().dim(0);
  require(spec.hidden_dim == d, "bilstm_embed: hidden_dim ", spec.hidden_dim,
          " must equal input dim ", d);
  const std::size_t n = inputs.size();

  std::vector<Value> h_fwd(n), h_bwd(n);
  LstmState s{tape.leaf(Tensor::zeros(Shape::vec(d))),
              tape.leaf(Tensor::zeros(Shape::vec(d)))};
  for (std::size_t i = 0; i < n; ++i) {
    s = lstm_cell_step(tape, binding, spec, fwd_prefix, inputs[i], s.h, s.c);
    h_fwd[i] = s.h;
  }
  s = LstmState{tape.leaf(Tensor::zeros(Shape::vec(d))),
                tape.leaf(Tensor::zeros(Shape::vec(d)))};
  for (std::size_t i = n; i-- > 0;) {
    s = lstm_cell_step(tape, binding, spec, bwd_prefix, inputs[i], s.h, s.c);
    h_bwd[i] = s.h;
  }

  std::vector<Value> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = tape.add(tape.add(h_fwd[i], h_bwd[i]), inputs[i]);
  return out;
}

/// Attention LSTM read over a fixed memory. Per round: the cell consumes the
/// query with recurrent state [h; r], h picks up a residual query term, and
/// r becomes the attention-weighted memory sum.
inline Value attlstm_embed(Tape& tape, const TapeBinding& binding,
                           const LstmCellSpec& spec, const std::string& prefix,
                           Value query, const std::vector<Value>& memory,
                           int steps) {
  require(!memory.empty(), "attlstm_embed: empty memory");
  require(steps >= 1, "attlstm_embed: steps ", steps, " must be >= 1");
  const int d = tape.value(query).shape().dim(0);
  require(spec.hidden_dim == d && spec.input_dim == d &&
              spec.recur_dim == 2 * d,
          "attlstm_embed: cell spec does not match query dim ", d);

  Value mem = tape.stack_rows(memory);
  Value h = tape.leaf(Tensor::zeros(Shape::vec(d)));
  Value r = tape.leaf(Tensor::zeros(Shape::vec(d)));
  Value c = tape.leaf(Tensor::zeros(Shape::vec(d)));
  for (int k = 0; k < steps; ++k) {
    LstmState s = lstm_cell_step(tape, binding, spec, prefix, query,
                                 tape.concat({h, r}), c);
    c = s.c;
    h = tape.add(s.h, query);
    Value att = tape.softmax(tape.matvec(mem, h));
    r = tape.matvec_t(mem, att);
  }
  return h;
}

// --- hallucinator ---------------------------------------------------------

inline MlpSpec hallucinator_mlp(const HallucinatorSpec& spec) {
  MlpSpec m;
  m.layer_dims = {spec.feature_dim + spec.noise_dim, spec.hidden_dim,
                  spec.hidden_dim, spec.feature_dim};
  m.final_relu = true;  // pre-trained features are non-negative
  return m;
}

inline Value hallucinate_value(Tape& tape, const TapeBinding& binding,
                               const HallucinatorSpec& spec,
                               const std::string& prefix, Value seed,
                               Value noise) {
  require(tape.value(seed).shape() == Shape::vec(spec.feature_dim),
          "hallucinate: seed shape ", tape.value(seed).shape().str(),
          " does not match d=", spec.feature_dim);
  require(tape.value(noise).shape() == Shape::vec(spec.noise_dim),
          "hallucinate: noise shape ", tape.value(noise).shape().str(),
          " does not match d_z=", spec.noise_dim);
  return mlp_forward(tape, binding, hallucinator_mlp(spec), prefix,
                     tape.concat({seed, noise}));
}

/// Batched hallucination: seeds [n x d] and noise [n x d_z] in one MLP pass.
inline Value hallucinate_rows(Tape& tape, const TapeBinding& binding,
                              const HallucinatorSpec& spec,
                              const std::string& prefix, Value seeds,
                              Value noise) {
  const Shape& ss = tape.value(seeds).shape();
  const Shape& ns = tape.value(noise).shape();
  require(ss.rank() == 2 && ss.cols() == spec.feature_dim,
          "hallucinate_rows: seeds shape ", ss.str(), " does not match d=",
          spec.feature_dim);
  require(ns.rank() == 2 && ns.cols() == spec.noise_dim &&
              ns.rows() == ss.rows(),
          "hallucinate_rows: noise shape ", ns.str(), " does not match");
  return mlp_forward(tape, binding, hallucinator_mlp(spec), prefix,
                     tape.hstack(seeds, noise));
}

/// Plain (non-differentiating) evaluation used at meta-test time; runs the
/// identical graph path on a throwaway tape so there is a single forward
/// definition.
inline std::vector<double> hallucinate_one(const ParamStore& store,
                                           const HallucinatorSpec& spec,
                                           const std::string& prefix,
                                           const std::vector<double>& seed,
                                           const std::vector<double>& noise) {
  require(static_cast<int>(seed.size()) == spec.feature_dim,
          "hallucinate_one: seed dim ", seed.size(), " != ", spec.feature_dim);
  require(static_cast<int>(noise.size()) == spec.noise_dim,
          "hallucinate_one: noise dim ", noise.size(), " != ", spec.noise_dim);
  Tape tape;
  TapeBinding binding(tape, store);
  Value out = hallucinate_value(tape, binding, spec, prefix,
                                tape.leaf(Tensor::vec(seed)),
                                tape.leaf(Tensor::vec(noise)));
  return tape.value(out).values();
}

}  // namespace lowshot
