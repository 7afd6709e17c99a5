#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <vector>

#include "lowshot/common.hpp"

namespace lowshot {

/// One feature vector plus its class label; the atom of all datasets.
/// Features are non-negative by contract (pre-trained features are).
struct Example {
  std::vector<double> features;
  ClassId label = 0;
  bool synthetic = false;
};

struct LabeledSet {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  int feature_dim() const {
    return examples.empty() ? 0 : static_cast<int>(examples[0].features.size());
  }

  // exact set of labels occurring, ascending
  std::vector<ClassId> classes() const {
    std::set<ClassId> s;
    for (const auto& e : examples) s.insert(e.label);
    return {s.begin(), s.end()};
  }

  std::vector<std::size_t> indices_of(ClassId c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < examples.size(); ++i)
      if (examples[i].label == c) out.push_back(i);
    return out;
  }

  std::size_t count_of(ClassId c) const {
    std::size_t n = 0;
    for (const auto& e : examples) n += e.label == c ? 1 : 0;
    return n;
  }

  void add(std::vector<double> features, ClassId label, bool synthetic = false) {
    examples.push_back({std::move(features), label, synthetic});
  }

  LabeledSet restricted_to(const std::vector<ClassId>& keep) const {
    const std::set<ClassId> wanted(keep.begin(), keep.end());
    LabeledSet out;
    for (const auto& e : examples)
      if (wanted.count(e.label)) out.examples.push_back(e);
    return out;
  }

  void validate() const {
    const std::size_t d = examples.empty() ? 0 : examples[0].features.size();
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& e = examples[i];
      require(e.features.size() == d, "LabeledSet: example ", i, " has dim ",
              e.features.size(), ", expected ", d);
      for (std::size_t j = 0; j < e.features.size(); ++j)
        require(e.features[j] >= 0.0, "LabeledSet: negative feature ",
                e.features[j], " in example ", i, " component ", j);
    }
  }
};

// Canonical sequence order for set-conditioned embeddings: (class id,
// position). Returns indices into the set, not a reordered copy.
inline std::vector<std::size_t> canonical_order(const LabeledSet& set) {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set.examples[a].label < set.examples[b].label;
  });
  return idx;
}

}  // namespace lowshot
