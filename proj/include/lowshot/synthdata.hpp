#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/data.hpp"
#include "lowshot/rng.hpp"

namespace lowshot {

/// Disjoint class partition: abundant base classes for meta-training, novel
/// validation classes for cross-validation, novel test classes held out
/// until evaluation.
struct SplitSpec {
  std::vector<ClassId> base;
  std::vector<ClassId> novel_val;
  std::vector<ClassId> novel_test;

  void validate() const {
    auto overlap = [](const std::vector<ClassId>& a,
                      const std::vector<ClassId>& b) {
      for (ClassId x : a)
        for (ClassId y : b)
          if (x == y) return true;
      return false;
    };
    require(!overlap(base, novel_val) && !overlap(base, novel_test) &&
                !overlap(novel_val, novel_test),
            "SplitSpec: class sets must be pairwise disjoint");
  }

  bool is_base(ClassId c) const {
    return std::find(base.begin(), base.end(), c) != base.end();
  }
  bool is_novel_val(ClassId c) const {
    return std::find(novel_val.begin(), novel_val.end(), c) != novel_val.end();
  }
  bool is_novel_test(ClassId c) const {
    return std::find(novel_test.begin(), novel_test.end(), c) != novel_test.end();
  }
};

/// Generator configuration. Classes share M latent "modes of variation";
/// within-class examples move along those modes while class identity lives
/// in the latent prototype.
struct SynthSpec {
  int num_classes = 20;
  int feature_dim = 32;
  int latent_dim = 8;
  int num_shared_modes = 3;
  double mode_strength = 1.5;
  int samples_per_class = 100;
  double noise = 0.05;
  double base_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    require(num_classes >= 1 && feature_dim >= 1 && latent_dim >= 1 &&
                num_shared_modes >= 1 && samples_per_class >= 1,
            "SynthSpec: all counts must be >= 1");
    require(feature_dim >= latent_dim, "SynthSpec: feature_dim ", feature_dim,
            " < latent_dim ", latent_dim);
    require(mode_strength >= 0.0 && noise >= 0.0,
            "SynthSpec: scales must be non-negative");
    require(base_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0,
            "SynthSpec: split fractions must be positive");
    require(std::abs(base_fraction + val_fraction + test_fraction - 1.0) < 1e-9,
            "SynthSpec: split fractions must sum to 1, got ",
            base_fraction + val_fraction + test_fraction);
  }
};

struct SynthDataset {
  LabeledSet data;
  SplitSpec split;
};

/// x = relu(A (c_k + sum_j alpha_j t_j) + eps) with a fixed random lift A,
/// shared unit mode directions t_j, and per-example coefficients alpha_j.
inline SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  Rng structure = master.split(1);
  Rng sampling = master.split(2);
  Rng split_rng = master.split(3);

  const int d = spec.feature_dim, L = spec.latent_dim, M = spec.num_shared_modes;

  // fixed random lift A [d x L]
  std::vector<double> lift(static_cast<std::size_t>(d) * L);
  const double lift_scale = 1.0 / std::sqrt(static_cast<double>(L));
  for (auto& v : lift) v = structure.normal(0.0, lift_scale);

  // shared unit mode directions
  std::vector<std::vector<double>> modes(static_cast<std::size_t>(M),
                                         std::vector<double>(static_cast<std::size_t>(L)));
  for (auto& t : modes) {
    double norm = 0.0;
    for (auto& v : t) {
      v = structure.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : t) v /= norm;
  }

  // latent class prototypes
  std::vector<std::vector<double>> prototypes(
      static_cast<std::size_t>(spec.num_classes),
      std::vector<double>(static_cast<std::size_t>(L)));
  for (auto& c : prototypes)
    for (auto& v : c) v = structure.normal();

  SynthDataset out;
  for (ClassId k = 0; k < static_cast<ClassId>(spec.num_classes); ++k) {
    Rng class_rng = sampling.split(k);
    for (int s = 0; s < spec.samples_per_class; ++s) {
      std::vector<double> u = prototypes[k];
      for (int j = 0; j < M; ++j) {
        const double alpha = class_rng.normal(0.0, spec.mode_strength);
        for (int l = 0; l < L; ++l)
          u[static_cast<std::size_t>(l)] += alpha * modes[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)];
      }
      std::vector<double> x(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (int l = 0; l < L; ++l)
          acc += lift[static_cast<std::size_t>(i) * L + l] * u[static_cast<std::size_t>(l)];
        if (spec.noise > 0.0) acc += class_rng.normal(0.0, spec.noise);
        x[static_cast<std::size_t>(i)] = std::max(0.0, acc);
      }
      out.data.add(std::move(x), k);
    }
  }

  // shuffled class partition per the configured fractions
  std::vector<ClassId> order(static_cast<std::size_t>(spec.num_classes));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<ClassId>(i);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[split_rng.uniform_index(i)]);

  const int n_base = std::max(1, static_cast<int>(std::floor(
                                    spec.base_fraction * spec.num_classes)));
  const int n_val = std::max(1, static_cast<int>(std::floor(
                                   spec.val_fraction * spec.num_classes)));
  require(n_base + n_val < spec.num_classes,
          "SynthSpec: fractions leave no novel-test classes (", n_base, "+",
          n_val, " of ", spec.num_classes, ")");
  for (int i = 0; i < spec.num_classes; ++i) {
    ClassId c = order[static_cast<std::size_t>(i)];
    if (i < n_base)
      out.split.base.push_back(c);
    else if (i < n_base + n_val)
      out.split.novel_val.push_back(c);
    else
      out.split.novel_test.push_back(c);
  }
  std::sort(out.split.base.begin(), out.split.base.end());
  std::sort(out.split.novel_val.begin(), out.split.novel_val.end());
  std::sort(out.split.novel_test.begin(), out.split.novel_test.end());
  out.split.validate();
  return out;
}

// --- dataset file -----------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian");

namespace dsfile {

constexpr char kMagic[8] = {'L', 'S', 'F', 'E', 'A', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

class Cursor {
 public:
  Cursor(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  template <typename T>
  T read(const char* what) {
    need(sizeof(T), what);
    T v{};
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void read_raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size())
      throw std::runtime_error(
          msg("dataset ", path_, ": truncated while reading ", what, " at byte ",
              pos_, ", needs ", pos_ + n - bytes_.size(), " more bytes"));
  }

  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline void write_ids(std::ostream& os, const std::vector<ClassId>& ids) {
  const std::uint32_t n = static_cast<std::uint32_t>(ids.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (ClassId c : ids)
    os.write(reinterpret_cast<const char*>(&c), sizeof(c));
}

inline std::vector<ClassId> read_ids(Cursor& cur, const char* what) {
  const auto n = cur.read<std::uint32_t>(what);
  std::vector<ClassId> out(n);
  for (auto& c : out) c = cur.read<ClassId>(what);
  return out;
}

}  // namespace dsfile

inline void save_dataset(const std::string& path, const LabeledSet& data,
                         const SplitSpec& split) {
  data.validate();
  split.validate();
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_dataset: cannot open ", path);
  os.write(dsfile::kMagic, sizeof(dsfile::kMagic));
  const std::uint32_t version = dsfile::kVersion;
  const std::uint32_t dim = static_cast<std::uint32_t>(data.feature_dim());
  const std::uint32_t classes = static_cast<std::uint32_t>(data.classes().size());
  const std::uint64_t count = data.size();
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  os.write(reinterpret_cast<const char*>(&classes), sizeof(classes));
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  dsfile::write_ids(os, split.base);
  dsfile::write_ids(os, split.novel_val);
  dsfile::write_ids(os, split.novel_test);
  for (const auto& e : data.examples) {
    os.write(reinterpret_cast<const char*>(&e.label), sizeof(e.label));
    os.write(reinterpret_cast<const char*>(e.features.data()),
             static_cast<std::streamsize>(e.features.size() * sizeof(double)));
  }
  require(os.good(), "save_dataset: write to ", path, " failed");
}

inline SynthDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good())
    throw std::runtime_error(msg("load_dataset: cannot open ", path));
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string bytes = buf.str();
  dsfile::Cursor cur(bytes, path);

  char magic[8];
  cur.read_raw(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, dsfile::kMagic, sizeof(magic)) != 0)
    throw std::runtime_error(msg("dataset ", path, ": bad magic"));
  const auto version = cur.read<std::uint32_t>("version");
  if (version != dsfile::kVersion)
    throw std::runtime_error(
        msg("dataset ", path, ": unsupported version ", version));
  const auto dim = cur.read<std::uint32_t>("feature dim");
  const auto class_count = cur.read<std::uint32_t>("class count");
  const auto count = cur.read<std::uint64_t>("example count");

  SynthDataset out;
  out.split.base = dsfile::read_ids(cur, "base classes");
  out.split.novel_val = dsfile::read_ids(cur, "novel-val classes");
  out.split.novel_test = dsfile::read_ids(cur, "novel-test classes");

  for (std::uint64_t i = 0; i < count; ++i) {
    Example e;
    e.label = cur.read<ClassId>("record label");
    e.features.resize(dim);
    cur.read_raw(e.features.data(), dim * sizeof(double), "record features");
    for (std::size_t j = 0; j < e.features.size(); ++j)
      if (e.features[j] < 0.0)
        throw std::runtime_error(msg("dataset ", path, ": negative feature ",
                                     e.features[j], " in record ", i,
                                     " component ", j));
    out.data.examples.push_back(std::move(e));
  }
  if (cur.remaining() != 0)
    throw std::runtime_error(msg("dataset ", path, ": ", cur.remaining(),
                                 " trailing bytes after ", count, " records"));
  if (out.data.classes().size() != class_count)
    throw std::runtime_error(msg("dataset ", path, ": header claims ",
                                 class_count, " classes, records contain ",
                                 out.data.classes().size()));
  out.split.validate();
  return out;
}

/// Plain-text import for user-supplied feature dumps:
/// one example per line, "label,f0,f1,...".
inline LabeledSet import_text(std::istream& is) {
  LabeledSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string field;
    require(static_cast<bool>(std::getline(ls, field, ',')), "import: line ",
            lineno, " has no label");
    Example e;
    try {
      e.label = static_cast<ClassId>(std::stoul(field));
    } catch (const std::exception&) {
      fail("import: line ", lineno, " has bad label \"", field, "\"");
    }
    while (std::getline(ls, field, ',')) {
      try {
        e.features.push_back(std::stod(field));
      } catch (const std::exception&) {
        fail("import: line ", lineno, " has bad value \"", field, "\"");
      }
    }
    require(!e.features.empty(), "import: line ", lineno, " has no features");
    out.examples.push_back(std::move(e));
  }
  out.validate();
  return out;
}

// FNV-1a content hash, embedded in every report so outputs name their input.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good())
    throw std::runtime_error(msg("hash_file: cannot open ", path));
  std::ostringstream buf;
  buf << is.rdbuf();
  return fnv1a(buf.str());
}

}  // namespace lowshot
