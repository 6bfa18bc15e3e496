#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gsnet/data.hpp"
#include "gsnet/metrics.hpp"
#include "gsnet/model.hpp"

namespace gsnet::cli {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double lr_power = 0.9;
  // Stop after the first epoch whose validation accuracy reaches this; 0 disables.
  double target_val_acc = 0.0;
  // 2n-1 classes on a half-level grid instead of n integer levels.
  bool half_level_head = false;
};

struct RunConfig {
  ModelConfig model;
  GrainGenConfig data;
  BuildOptions build;
  std::string data_dir = "data";
  TrainConfig train;
  RecallMode recall = RecallMode::kMacro;
  std::string eval_split = "val";
  std::uint64_t seed = 1;
  std::string out_dir = "runs";

  // Cross-section checks (classes vs levels, crop vs model input). Throws ConfigError.
  void validate() const;
  std::size_t expected_classes() const;
};

// Flat `key = value` lines; '#' starts a comment; keys are dotted. Unknown or
// repeated keys are rejected with the line number.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Every key, fixed order, reals printed round-trip exact.
std::string serialize_config(const RunConfig& cfg);

}  // namespace gsnet::cli
