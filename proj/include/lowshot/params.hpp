#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/diffgraph.hpp"
#include "lowshot/rng.hpp"
#include "lowshot/tensor.hpp"

namespace lowshot {

/// Named, shaped parameter tensors for one model. Iteration order is sorted
/// by name, so every traversal (updates, checkpoints, gradient dumps) is
/// deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor velocity;
    bool trainable = true;
  };

  explicit ParamStore(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t s) { rng_seed_ = s; }

  Entry& add(const std::string& name, Tensor init, bool trainable = true) {
    require(entries_.find(name) == entries_.end(),
            "ParamStore: duplicate parameter \"", name, "\"");
    Entry e;
    e.grad = Tensor::zeros(init.shape());
    e.velocity = Tensor::zeros(init.shape());
    e.value = std::move(init);
    e.trainable = trainable;
    return entries_.emplace(name, std::move(e)).first->second;
  }

  bool has(const std::string& name) const {
    return entries_.find(name) != entries_.end();
  }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), "ParamStore: unknown parameter \"", name, "\"");
    return it->second;
  }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), "ParamStore: unknown parameter \"", name, "\"");
    return it->second;
  }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::size_t size() const { return entries_.size(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grads() {
    for (auto& [k, e] : entries_) e.grad.fill(0.0);
  }

  // True if any parameter name starts with the prefix.
  bool has_group(std::string_view prefix) const {
    for (const auto& [k, e] : entries_)
      if (k.size() >= prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix)
        return true;
    return false;
  }

  double grad_norm(std::string_view prefix = "") const {
    double s = 0.0;
    for (const auto& [k, e] : entries_) {
      if (!prefix.empty() &&
          (k.size() < prefix.size() ||
           std::string_view(k).substr(0, prefix.size()) != prefix))
        continue;
      for (double g : e.grad.values()) s += g * g;
    }
    return std::sqrt(s);
  }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t rng_seed_;
};

/// Leafs every parameter of a store onto one tape. After backward(), the
/// gradients can be copied back into the store.
class TapeBinding {
 public:
  TapeBinding(Tape& tape, const ParamStore& store) : tape_(&tape) {
    for (const auto& [name, e] : store)
      leaves_.emplace(name, tape.leaf(e.value));
  }

  Value operator[](const std::string& name) const {
    auto it = leaves_.find(name);
    require(it != leaves_.end(), "TapeBinding: unknown parameter \"", name, "\"");
    return it->second;
  }

  bool has(const std::string& name) const {
    return leaves_.find(name) != leaves_.end();
  }

  /// Copies d(loss)/d(param) into store.grad for every bound parameter;
  /// parameters off the differentiation path receive zeros.
  void collect_grads(ParamStore& store) const {
    for (const auto& [name, leaf] : leaves_)
      store.grad(name) = tape_->grad(leaf);
  }

 private:
  Tape* tape_;
  std::map<std::string, Value> leaves_;
};

/// v <- momentum * v + grad; p <- p - lr * v; grads are zeroed afterwards.
/// Refuses to step on non-finite gradients.
inline void sgd_step(ParamStore& store, double lr, double momentum) {
  require(lr >= 0.0, "sgd_step: negative learning rate ", lr);
  require(momentum >= 0.0 && momentum < 1.0, "sgd_step: momentum ", momentum,
          " outside [0,1)");
  for (auto& [name, e] : store) {
    if (!e.trainable) continue;
    if (!e.grad.all_finite())
      throw std::runtime_error(
          msg("sgd_step: non-finite gradient in \"", name,
              "\" (|value|=", e.value.norm(), ", step refused)"));
  }
  for (auto& [name, e] : store) {
    if (e.trainable) {
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        e.velocity[i] = momentum * e.velocity[i] + e.grad[i];
        e.value[i] -= lr * e.velocity[i];
      }
    }
    e.grad.fill(0.0);
  }
}

}  // namespace lowshot
