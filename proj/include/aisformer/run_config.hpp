#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aisformer/dataset.hpp"
#include "aisformer/model.hpp"

namespace aisf {

// Everything a training or evaluation run needs. Serialized as `key = value`
// lines; the same keys are accepted as command-line overrides.
struct RunConfig {
  ModelConfig model;
  double learning_rate = 0.0025;
  std::size_t batch_size = 1;
  std::size_t iterations = 2000;
  std::size_t checkpoint_interval = 0;  // 0: only the final checkpoint
  std::string dataset;                  // annotations.json; empty selects synthesis
  SynthOptions synth;
  double min_visible_fraction = 0.1;    // training ROIs hidden beyond this are skipped

  RunConfig();

  // Assigns one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  static RunConfig from_map(const std::map<std::string, std::string>& values);
  void validate() const;

  static const std::vector<std::string>& keys();
};

// Parses `key = value` lines ('#' starts a comment). Throws ConfigError with
// the line number.
RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig{});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = RunConfig{});
std::string config_to_text(const RunConfig& config);

// Worker count for per-ROI fan-out, capped by AISF_THREADS when set.
std::size_t worker_count();

}  // namespace aisf
