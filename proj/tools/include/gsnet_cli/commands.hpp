#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsnet_cli/config.hpp"

namespace gsnet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNonFinite = 4,
};

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

// One ablation row: the three module switches of a variant.
struct AblationVariant {
  std::string name;
  bool guided;
  bool triple;
  bool iawca;
};
// GSNet-0..3: triple-stream off, guided attention off, IAWCA off, full model.
const std::vector<AblationVariant>& ablation_variants();

// Each command maps failures to exit codes and never throws.
int cmd_generate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_diagnose(const CommandOptions& opts, std::ostream& out, std::ostream& err);

// argv-style entry point shared by the executable and tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gsnet::cli
