#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tora::cli {

struct CliConfig {
  std::string subcommand;
  std::vector<std::string> inputs;
  std::string cond_path;
  std::string null_path;
  std::string output;
  std::string report;
  std::string format = "json";
  double sigma = 1.3;
  bool no_align = false;
  std::optional<int> elbow_k;
  int clusters = 0;  // 0 = max(2, V / 8)
  std::uint64_t seed = 0;
  int blocks = 6;
  int timesteps = 4;
  int tokens = 8;
  int latents = 16;
  int dim = 64;
  std::string grid = "1.0:1.5:0.1";
  int jobs = 1;
  std::string attn_combine = "concat";
};

/// Parses "A:B:STEP" (or a single value) into an ascending list of sigmas.
std::vector<double> parse_grid(const std::string& text);

int cmd_transform(const CliConfig& config, std::ostream& out);
int cmd_analyze(const CliConfig& config, std::ostream& out);
int cmd_simulate(const CliConfig& config, std::ostream& out);
int cmd_sweep(const CliConfig& config, std::ostream& out);

/// Full entry point: parses `args` (without the program name), dispatches,
/// and converts failures into a JSON error line on `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tora::cli
