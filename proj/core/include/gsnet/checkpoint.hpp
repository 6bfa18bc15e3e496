#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gsnet/optim.hpp"

namespace gsnet {

// Binary layout, all integers little-endian:
//   "GSNC" | u32 version | u32 count |
//   count x { u32 name_len | name (UTF-8) | u32 rank | rank x u64 extent | f64 payload }
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamList& tensors);
ParamList decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Written to a sibling temp file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const ParamList& tensors);
ParamList load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint values into `params` in place. Names and shapes must match
// exactly; mismatches raise ConfigError naming the offending tensor.
void restore_parameters(ParamList& params, const ParamList& stored);

// Atomic whole-file write used for every artifact.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace gsnet
