#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aisformer/dataset.hpp"
#include "aisformer/parameters.hpp"
#include "aisformer/run_config.hpp"

namespace aisf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout (little-endian): "AISF", u32 version, u64 header length,
// JSON header, then every tensor's values as f64 at the offsets (in values,
// not bytes) listed in the header's tensor directory.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  RunConfig config;
  std::vector<Category> categories;
  std::uint64_t iteration = 0;  // optimizer steps taken
  std::string rng_state;        // textual std::mt19937_64 state
  ParameterSet parameters;
};

std::string checkpoint_to_bytes(const Checkpoint& checkpoint);
// Throws FormatError on a bad magic, unknown version, truncated payload or
// malformed header.
Checkpoint checkpoint_from_bytes(const std::string& bytes);

// Throws IoError when the file cannot be written or read.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Deep copy of the model's parameter values.
ParameterSet snapshot_parameters(const ParameterSet& params);

// Builds the configured model and loads the stored values. Throws
// FormatError unless the checkpoint has exactly one entry per parameter.
AisformerModel model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace aisf
