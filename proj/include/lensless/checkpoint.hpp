// SPDX-License-Identifier: Apache-2.0
//
// Flat binary parameter container, shared by both network families.
//
//   magic "LNCK" | u32 version=1 | u32 arch (0 coordinate-mlp, 1 decoder)
//   u64 seed
//   arch fields  (mlp: u32 in_dim,out_dim,width,hidden_layers,
//                      f32 omega_first,omega_hidden, u32 output_activation;
//                 decoder: u32 channels,out_height,out_width)
//   u32 tensor_count, then per tensor u32 rows, u32 cols
//   payload: float32, tensors in parameter order (per layer: weights then
//            biases), each tensor row-major
//
// All integers and floats are little-endian. Values are stored as 32-bit
// floats regardless of the in-memory scalar.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lensless/decoder.hpp"
#include "lensless/siren.hpp"

namespace lensless {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

enum class ArchTag : std::uint32_t { CoordinateMlp = 0, Decoder = 1 };

namespace detail {

inline constexpr char kCkptMagic[4] = {'L', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline float read_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

template <class Scalar>
void write_tensors(std::ostream& os, const ParamSet<Scalar>& set) {
  write_u32(os, static_cast<std::uint32_t>(set.size()));
  for (const auto* t : set.tensors) {
    write_u32(os, static_cast<std::uint32_t>(t->rows()));
    write_u32(os, static_cast<std::uint32_t>(t->cols()));
  }
  for (const auto* t : set.tensors)
    for (Index r = 0; r < t->rows(); ++r)
      for (Index c = 0; c < t->cols(); ++c)
        write_f32(os, static_cast<float>((*t)(r, c)));
}

template <class Scalar>
void read_tensors(std::istream& is, ParamSet<Scalar>& set, const std::string& path) {
  const std::uint32_t count = read_u32(is);
  if (count != set.size())
    throw ConfigError("checkpoint " + path + ": expected " + std::to_string(set.size()) +
                      " tensors, found " + std::to_string(count));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
  for (auto& s : shapes) {
    s.first = read_u32(is);
    s.second = read_u32(is);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    Mat<Scalar>& t = *set.tensors[i];
    if (shapes[i].first != static_cast<std::uint32_t>(t.rows()) ||
        shapes[i].second != static_cast<std::uint32_t>(t.cols()))
      throw ConfigError("checkpoint " + path + ": tensor " + set.names[i] + " is " +
                        std::to_string(shapes[i].first) + "x" + std::to_string(shapes[i].second) +
                        ", expected " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) t(r, c) = static_cast<Scalar>(read_f32(is));
  }
  if (!is) throw IoError("checkpoint " + path + ": truncated payload");
}

inline void check_header(std::istream& is, const std::string& path, ArchTag expected) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ConfigError("checkpoint " + path + ": bad magic");
  const std::uint32_t version = read_u32(is);
  if (version != kCkptVersion)
    throw ConfigError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  const std::uint32_t arch = read_u32(is);
  if (arch != static_cast<std::uint32_t>(expected))
    throw ConfigError("checkpoint " + path + ": architecture tag " + std::to_string(arch) +
                      " does not match the requested network");
}

}  // namespace detail

inline ArchTag peek_checkpoint_arch(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw ConfigError("checkpoint " + path + ": bad magic");
  (void)detail::read_u32(is);  // version
  return static_cast<ArchTag>(detail::read_u32(is));
}

template <class Scalar>
void save_checkpoint(const std::string& path, const SirenConfig& cfg, SirenParams<Scalar>& p,
                     std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(detail::kCkptMagic, 4);
  detail::write_u32(os, detail::kCkptVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(ArchTag::CoordinateMlp));
  detail::write_u64(os, seed);
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.in_dim));
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.out_dim));
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.hidden_width));
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.hidden_layers));
  detail::write_f32(os, static_cast<float>(cfg.omega0_first));
  detail::write_f32(os, static_cast<float>(cfg.omega0_hidden));
  detail::write_u32(os, cfg.output_activation == OutputActivation::Sigmoid ? 1u : 0u);
  auto set = p.param_set();
  detail::write_tensors(os, set);
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

struct SirenCheckpoint {
  SirenConfig config;
  std::uint64_t seed = 0;
};

template <class Scalar>
SirenCheckpoint load_checkpoint(const std::string& path, SirenParams<Scalar>& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  detail::check_header(is, path, ArchTag::CoordinateMlp);
  SirenCheckpoint ck;
  ck.seed = detail::read_u64(is);
  ck.config.in_dim = static_cast<int>(detail::read_u32(is));
  ck.config.out_dim = static_cast<int>(detail::read_u32(is));
  ck.config.hidden_width = static_cast<int>(detail::read_u32(is));
  ck.config.hidden_layers = static_cast<int>(detail::read_u32(is));
  ck.config.omega0_first = detail::read_f32(is);
  ck.config.omega0_hidden = detail::read_f32(is);
  ck.config.output_activation =
      detail::read_u32(is) == 1u ? OutputActivation::Sigmoid : OutputActivation::Linear;
  if (!is) throw IoError("checkpoint " + path + ": truncated header");
  ck.config.validate();
  out = init_siren<Scalar>(ck.config, 0);  // allocates the right shapes
  auto set = out.param_set();
  detail::read_tensors(is, set, path);
  return ck;
}

template <class Scalar>
void save_checkpoint(const std::string& path, const DecoderConfig& cfg, DecoderParams<Scalar>& p,
                     std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(detail::kCkptMagic, 4);
  detail::write_u32(os, detail::kCkptVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(ArchTag::Decoder));
  detail::write_u64(os, seed);
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.channels));
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.out_height));
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.out_width));
  auto set = p.param_set();
  detail::write_tensors(os, set);
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

struct DecoderCheckpoint {
  DecoderConfig config;
  std::uint64_t seed = 0;
};

// The frozen latent is not stored; it regenerates from the recorded seed.
template <class Scalar>
DecoderCheckpoint load_checkpoint_decoder(const std::string& path, DecoderParams<Scalar>& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  detail::check_header(is, path, ArchTag::Decoder);
  DecoderCheckpoint ck;
  ck.seed = detail::read_u64(is);
  ck.config.channels = static_cast<int>(detail::read_u32(is));
  ck.config.out_height = static_cast<int>(detail::read_u32(is));
  ck.config.out_width = static_cast<int>(detail::read_u32(is));
  if (!is) throw IoError("checkpoint " + path + ": truncated header");
  ck.config.validate();
  out = init_decoder<Scalar>(ck.config, ck.seed);  // shapes + the frozen latent
  auto set = out.param_set();
  detail::read_tensors(is, set, path);
  return ck;
}

}  // namespace lensless
