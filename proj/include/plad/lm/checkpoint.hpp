#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "plad/lm/model.hpp"

namespace plad::lm {

// Binary layout (all integers and floats little-endian):
//   "PLADCKPT"                       8 bytes
//   u32 format version
//   u64 config hash, u64 seed, str tag
//   u32 n_layers, u32 width, u32 n_heads, u32 max_len, str positional
//   u32 vocab size, vocab size x str, u32 pad, u32 bos, u32 eos
//   u32 tensor count
//   per tensor: str name, u32 rank, rank x u64 dims, f64 values
// where str = u32 byte length followed by UTF-8 bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const ModelParams& model);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace plad::lm
