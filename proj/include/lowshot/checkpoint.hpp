#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/params.hpp"

namespace lowshot {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace ckpt {

constexpr char kMagic[8] = {'L', 'S', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is)
    throw std::runtime_error(msg("checkpoint: truncated while reading ", what));
  return v;
}

}  // namespace ckpt

/// Header (magic, version, names, shapes) followed by the raw 64-bit values
/// in sorted-name order.
inline void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "save_checkpoint: cannot open ", path);
  os.write(ckpt::kMagic, sizeof(ckpt::kMagic));
  ckpt::write_pod(os, ckpt::kVersion);
  ckpt::write_pod(os, store.rng_seed());
  ckpt::write_pod(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, e] : store) {
    ckpt::write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    ckpt::write_pod(os, static_cast<std::uint8_t>(e.trainable ? 1 : 0));
    ckpt::write_pod(os, static_cast<std::uint32_t>(e.value.shape().rank()));
    for (int i = 0; i < e.value.shape().rank(); ++i)
      ckpt::write_pod(os, static_cast<std::uint32_t>(e.value.shape().dim(i)));
  }
  for (const auto& [name, e] : store)
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  require(os.good(), "save_checkpoint: write to ", path, " failed");
}

inline ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good())
    throw std::runtime_error(msg("load_checkpoint: cannot open ", path));
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, ckpt::kMagic, sizeof(magic)) != 0)
    throw std::runtime_error(msg("load_checkpoint: bad magic in ", path));
  const auto version = ckpt::read_pod<std::uint32_t>(is, "version");
  if (version != ckpt::kVersion)
    throw std::runtime_error(
        msg("load_checkpoint: unsupported version ", version));
  const auto seed = ckpt::read_pod<std::uint64_t>(is, "rng seed");
  const auto count = ckpt::read_pod<std::uint32_t>(is, "entry count");

  struct Meta {
    std::string name;
    bool trainable;
    Shape shape;
  };
  std::vector<Meta> metas;
  metas.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = ckpt::read_pod<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is)
      throw std::runtime_error(msg("checkpoint: truncated in name ", i));
    const auto trainable = ckpt::read_pod<std::uint8_t>(is, "trainable flag");
    const auto rank = ckpt::read_pod<std::uint32_t>(is, "rank");
    if (rank > 3)
      throw std::runtime_error(msg("checkpoint: rank ", rank, " invalid"));
    std::vector<int> dims;
    for (std::uint32_t r = 0; r < rank; ++r)
      dims.push_back(static_cast<int>(ckpt::read_pod<std::uint32_t>(is, "dim")));
    metas.push_back({std::move(name), trainable != 0, Shape(dims)});
  }

  ParamStore store(seed);
  for (const auto& m : metas) {
    Tensor t(m.shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is)
      throw std::runtime_error(
          msg("checkpoint: truncated in values of \"", m.name, "\""));
    store.add(m.name, std::move(t), m.trainable);
  }
  return store;
}

}  // namespace lowshot
