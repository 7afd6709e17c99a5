#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/data.hpp"
#include "lowshot/diffgraph.hpp"
#include "lowshot/nets.hpp"
#include "lowshot/params.hpp"

namespace lowshot {

enum class LearnerKind { pn, mn, pmn };

inline const char* learner_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::pn: return "pn";
    case LearnerKind::mn: return "mn";
    case LearnerKind::pmn: return "pmn";
  }
  return "?";
}

inline LearnerKind learner_from_name(const std::string& s) {
  if (s == "pn") return LearnerKind::pn;
  if (s == "mn") return LearnerKind::mn;
  if (s == "pmn") return LearnerKind::pmn;
  fail("unknown learner \"", s, "\" (expected pn, mn or pmn)");
}

/// Architecture of one classification algorithm h: the embedding head phi
/// (shared across learners), the set/query LSTMs for MN and PMN, and an
/// optional hallucinator G.
struct ModelSpec {
  LearnerKind kind = LearnerKind::pn;
  int feature_dim = 0;
  int embed_dim = 0;        // phi output; LSTM widths match it
  bool identity_phi = false;  // debug mode for hand-checkable tests
  int phi_hidden = 0;       // 0 -> embed_dim
  int att_steps = 2;
  bool has_hallucinator = false;
  int noise_dim = 0;        // 0 -> feature_dim
  int g_hidden = 0;         // 0 -> feature_dim

  MlpSpec phi_spec() const {
    const int hidden = phi_hidden > 0 ? phi_hidden : embed_dim;
    return MlpSpec{{feature_dim, hidden, embed_dim}, false};
  }

  int embedding_dim() const { return identity_phi ? feature_dim : embed_dim; }

  LstmCellSpec bilstm_spec() const {
    const int d = embedding_dim();
    return LstmCellSpec{d, d, d};
  }

  LstmCellSpec attlstm_spec() const {
    const int d = embedding_dim();
    return LstmCellSpec{d, d, 2 * d};
  }

  HallucinatorSpec g_spec() const {
    return HallucinatorSpec{feature_dim,
                            noise_dim > 0 ? noise_dim : feature_dim,
                            g_hidden > 0 ? g_hidden : feature_dim};
  }

  bool uses_lstms() const { return kind != LearnerKind::pn; }

  void validate() const {
    require(feature_dim >= 1, "ModelSpec: feature_dim must be positive");
    require(identity_phi || embed_dim >= 1,
            "ModelSpec: embed_dim must be positive");
    require(att_steps >= 1, "ModelSpec: att_steps must be >= 1");
  }
};

inline ParamStore init_model_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore store(seed);
  Rng rng(mix_seed(seed, 0x1115));
  if (!spec.identity_phi) init_mlp(store, spec.phi_spec(), "phi", rng);
  if (spec.uses_lstms()) {
    init_lstm_cell(store, spec.bilstm_spec(), "g.fwd", rng);
    init_lstm_cell(store, spec.bilstm_spec(), "g.bwd", rng);
    init_lstm_cell(store, spec.attlstm_spec(), "f", rng);
  }
  if (spec.has_hallucinator)
    init_hallucinator_identity(store, spec.g_spec(), "G");
  return store;
}

// --- graph-level classification --------------------------------------------
//
// Training sets enter as individual feature nodes so that hallucinated
// examples keep their gradient path back into G.

struct EpisodeNodes {
  std::vector<Value> train_features;   // each [d]
  std::vector<ClassId> train_labels;   // parallel to train_features
  std::vector<Value> query_features;   // each [d]
  std::vector<ClassId> label_space;    // ordered, explicit
};

namespace detail {

inline void check_episode(const Tape& tape, const EpisodeNodes& ep) {
  require(!ep.train_features.empty(), "classify: empty training set");
  require(ep.train_features.size() == ep.train_labels.size(),
          "classify: train features/labels length mismatch");
  require(!ep.label_space.empty(), "classify: empty label space");
  for (ClassId c : ep.label_space) {
    const bool present =
        std::find(ep.train_labels.begin(), ep.train_labels.end(), c) !=
        ep.train_labels.end();
    require(present, "classify: label-space class ", c,
            " has no training example");
  }
  for (ClassId c : ep.train_labels)
    require(std::find(ep.label_space.begin(), ep.label_space.end(), c) !=
                ep.label_space.end(),
            "classify: training example of class ", c,
            " outside the label space");
  (void)tape;
}

inline Value embed_phi(Tape& tape, const TapeBinding& binding,
                       const ModelSpec& spec, Value batch) {
  if (spec.identity_phi) return batch;
  return mlp_forward(tape, binding, spec.phi_spec(), "phi", batch);
}

// indices into `labels` grouped per label-space class, label-space order
inline std::vector<std::vector<int>> class_members(
    const std::vector<ClassId>& labels, const std::vector<ClassId>& space) {
  std::vector<std::vector<int>> out(space.size());
  for (std::size_t k = 0; k < space.size(); ++k)
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == space[k]) out[k].push_back(static_cast<int>(i));
  return out;
}

// canonical (class id, position) order of the training items
inline std::vector<std::size_t> canonical_train_order(
    const std::vector<ClassId>& labels) {
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  return idx;
}

// contextual embeddings g(x_i) in ORIGINAL train order
inline std::vector<Value> contextual_embeddings(Tape& tape,
                                                const TapeBinding& binding,
                                                const ModelSpec& spec,
                                                const EpisodeNodes& ep) {
  Value train_mat = tape.stack_rows(ep.train_features);
  Value embedded = embed_phi(tape, binding, spec, train_mat);
  const auto order = canonical_train_order(ep.train_labels);
  std::vector<Value> seq;
  seq.reserve(order.size());
  for (std::size_t i : order)
    seq.push_back(tape.row(embedded, static_cast<int>(i)));
  auto ctx = bilstm_embed(tape, binding, spec.bilstm_spec(), "g.fwd", "g.bwd", seq);
  std::vector<Value> out(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) out[order[pos]] = ctx[pos];
  return out;
}

inline std::vector<Value> embed_queries(Tape& tape, const TapeBinding& binding,
                                        const ModelSpec& spec,
                                        const EpisodeNodes& ep) {
  require(!ep.query_features.empty(), "classify: no queries");
  Value mat = tape.stack_rows(ep.query_features);
  Value emb = embed_phi(tape, binding, spec, mat);
  std::vector<Value> out;
  out.reserve(ep.query_features.size());
  for (std::size_t i = 0; i < ep.query_features.size(); ++i)
    out.push_back(tape.row(emb, static_cast<int>(i)));
  return out;
}

}  // namespace detail

/// Prototypical networks: per-class means in embedding space, squared
/// Euclidean distances as (negative) scores. Returns one score vector [K]
/// per query, ordered like the label space.
inline std::vector<Value> pn_scores(Tape& tape, const TapeBinding& binding,
                                    const ModelSpec& spec,
                                    const EpisodeNodes& ep) {
  detail::check_episode(tape, ep);
  Value train_mat = tape.stack_rows(ep.train_features);
  Value embedded = detail::embed_phi(tape, binding, spec, train_mat);
  const auto members = detail::class_members(ep.train_labels, ep.label_space);
  std::vector<Value> prototypes;
  prototypes.reserve(members.size());
  for (const auto& idx : members)
    prototypes.push_back(tape.mean_rows(tape.select_rows(embedded, idx)));

  auto queries = detail::embed_queries(tape, binding, spec, ep);
  std::vector<Value> out;
  out.reserve(queries.size());
  for (Value q : queries) {
    std::vector<Value> score_parts;
    score_parts.reserve(prototypes.size());
    for (Value mu : prototypes)
      score_parts.push_back(tape.neg(tape.squared_euclidean(q, mu)));
    out.push_back(tape.concat(score_parts));
  }
  return out;
}

/// Matching networks: soft nearest neighbor over contextually embedded
/// training examples, cosine distance. Returns per-query class probability
/// vectors (these are not softmaxes of per-class scores).
inline std::vector<Value> mn_probs(Tape& tape, const TapeBinding& binding,
                                   const ModelSpec& spec,
                                   const EpisodeNodes& ep) {
  detail::check_episode(tape, ep);
  auto ctx = detail::contextual_embeddings(tape, binding, spec, ep);
  auto queries = detail::embed_queries(tape, binding, spec, ep);

  // class indicator [N x K], a constant
  const std::size_t n = ep.train_labels.size();
  const std::size_t k = ep.label_space.size();
  Tensor indicator(Shape::mat(static_cast<int>(n), static_cast<int>(k)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      if (ep.train_labels[i] == ep.label_space[c])
        indicator.at(static_cast<int>(i), static_cast<int>(c)) = 1.0;
  Value ind = tape.leaf(std::move(indicator));

  std::vector<Value> out;
  out.reserve(queries.size());
  for (Value q : queries) {
    Value f = attlstm_embed(tape, binding, spec.attlstm_spec(), "f", q, ctx,
                            spec.att_steps);
    std::vector<Value> dist_parts;
    dist_parts.reserve(ctx.size());
    for (Value g : ctx) dist_parts.push_back(tape.cosine_distance(f, g));
    Value attention = tape.softmax(tape.neg(tape.concat(dist_parts)));
    out.push_back(tape.matvec_t(ind, attention));
  }
  return out;
}

/// Prototype matching networks: classes collapse to means of the contextual
/// embeddings; the attention LSTM attends over those means; scores are
/// negative cosine distances to them.
inline std::vector<Value> pmn_scores(Tape& tape, const TapeBinding& binding,
                                     const ModelSpec& spec,
                                     const EpisodeNodes& ep) {
  detail::check_episode(tape, ep);
  auto ctx = detail::contextual_embeddings(tape, binding, spec, ep);
  Value ctx_mat = tape.stack_rows(ctx);
  const auto members = detail::class_members(ep.train_labels, ep.label_space);
  std::vector<Value> nu;
  nu.reserve(members.size());
  for (const auto& idx : members)
    nu.push_back(tape.mean_rows(tape.select_rows(ctx_mat, idx)));

  auto queries = detail::embed_queries(tape, binding, spec, ep);
  std::vector<Value> out;
  out.reserve(queries.size());
  for (Value q : queries) {
    Value f = attlstm_embed(tape, binding, spec.attlstm_spec(), "f", q, nu,
                            spec.att_steps);
    std::vector<Value> score_parts;
    score_parts.reserve(nu.size());
    for (Value v : nu)
      score_parts.push_back(tape.neg(tape.cosine_distance(f, v)));
    out.push_back(tape.concat(score_parts));
  }
  return out;
}

/// Per-query probability vectors for any learner kind.
inline std::vector<Value> classify_probs(Tape& tape, const TapeBinding& binding,
                                         const ModelSpec& spec,
                                         const EpisodeNodes& ep) {
  switch (spec.kind) {
    case LearnerKind::pn: {
      auto scores = pn_scores(tape, binding, spec, ep);
      for (auto& s : scores) s = tape.softmax(s);
      return scores;
    }
    case LearnerKind::mn:
      return mn_probs(tape, binding, spec, ep);
    case LearnerKind::pmn: {
      auto scores = pmn_scores(tape, binding, spec, ep);
      for (auto& s : scores) s = tape.softmax(s);
      return scores;
    }
  }
  fail("classify_probs: bad learner kind");
}

/// -log(pred[truth]) with truth given as an index into the label space.
inline Value cross_entropy_loss(Tape& tape, Value pred, int truth_index) {
  const Tensor& p = tape.value(pred);
  require(truth_index >= 0 && truth_index < p.shape().dim(0),
          "cross_entropy_loss: truth index ", truth_index,
          " outside label space of size ", p.shape().dim(0));
  return tape.neg(tape.log_(tape.select_element(pred, truth_index)));
}

inline Value cross_entropy_loss(Tape& tape, Value pred,
                                const std::vector<ClassId>& label_space,
                                ClassId truth) {
  auto it = std::find(label_space.begin(), label_space.end(), truth);
  require(it != label_space.end(), "cross_entropy_loss: class ", truth,
          " not in the label space");
  return cross_entropy_loss(
      tape, pred, static_cast<int>(std::distance(label_space.begin(), it)));
}

// --- plain wrappers ---------------------------------------------------------

struct ProbabilityVector {
  std::vector<ClassId> label_space;
  std::vector<double> p;
};

struct ScoreVector {
  std::vector<ClassId> label_space;
  std::vector<double> s;
};

namespace detail {

inline EpisodeNodes leaf_episode(Tape& tape, const LabeledSet& train,
                                 const std::vector<std::vector<double>>& queries,
                                 std::vector<ClassId> label_space) {
  EpisodeNodes ep;
  ep.label_space = std::move(label_space);
  for (const auto& e : train.examples) {
    ep.train_features.push_back(tape.leaf(Tensor::vec(e.features)));
    ep.train_labels.push_back(e.label);
  }
  for (const auto& q : queries)
    ep.query_features.push_back(tape.leaf(Tensor::vec(q)));
  return ep;
}

}  // namespace detail

inline std::vector<ProbabilityVector> classify(
    const ParamStore& store, const ModelSpec& spec, const LabeledSet& train,
    const std::vector<std::vector<double>>& queries,
    std::vector<ClassId> label_space = {}) {
  if (label_space.empty()) label_space = train.classes();
  Tape tape;
  TapeBinding binding(tape, store);
  EpisodeNodes ep = detail::leaf_episode(tape, train, queries, label_space);
  auto probs = classify_probs(tape, binding, spec, ep);
  std::vector<ProbabilityVector> out;
  out.reserve(probs.size());
  for (Value v : probs)
    out.push_back({label_space, tape.value(v).values()});
  return out;
}

/// Raw per-class scores with softmax semantics: negative distances for PN
/// and PMN, log-probabilities for MN (whose probabilities are not softmax
/// scores to begin with).
inline std::vector<ScoreVector> classify_scores(
    const ParamStore& store, const ModelSpec& spec, const LabeledSet& train,
    const std::vector<std::vector<double>>& queries,
    std::vector<ClassId> label_space = {}) {
  if (label_space.empty()) label_space = train.classes();
  Tape tape;
  TapeBinding binding(tape, store);
  EpisodeNodes ep = detail::leaf_episode(tape, train, queries, label_space);
  std::vector<ScoreVector> out;
  switch (spec.kind) {
    case LearnerKind::pn:
      for (Value v : pn_scores(tape, binding, spec, ep))
        out.push_back({label_space, tape.value(v).values()});
      break;
    case LearnerKind::pmn:
      for (Value v : pmn_scores(tape, binding, spec, ep))
        out.push_back({label_space, tape.value(v).values()});
      break;
    case LearnerKind::mn:
      for (Value v : mn_probs(tape, binding, spec, ep)) {
        std::vector<double> s = tape.value(v).values();
        for (double& x : s) x = std::log(std::max(x, 1e-300));
        out.push_back({label_space, std::move(s)});
      }
      break;
  }
  return out;
}

inline std::vector<ProbabilityVector> pn_classify(
    const ParamStore& store, const ModelSpec& spec, const LabeledSet& train,
    const std::vector<std::vector<double>>& queries,
    std::vector<ClassId> label_space = {}) {
  ModelSpec s = spec;
  s.kind = LearnerKind::pn;
  return classify(store, s, train, queries, std::move(label_space));
}

inline std::vector<ProbabilityVector> mn_classify(
    const ParamStore& store, const ModelSpec& spec, const LabeledSet& train,
    const std::vector<std::vector<double>>& queries,
    std::vector<ClassId> label_space = {}) {
  ModelSpec s = spec;
  s.kind = LearnerKind::mn;
  return classify(store, s, train, queries, std::move(label_space));
}

inline std::vector<ProbabilityVector> pmn_classify(
    const ParamStore& store, const ModelSpec& spec, const LabeledSet& train,
    const std::vector<std::vector<double>>& queries,
    std::vector<ClassId> label_space = {}) {
  ModelSpec s = spec;
  s.kind = LearnerKind::pmn;
  return classify(store, s, train, queries, std::move(label_space));
}

}  // namespace lowshot
