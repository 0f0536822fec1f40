#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "hohsmm/data_features.hpp"
#include "hohsmm/sampler.hpp"

namespace hohsmm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNumericError = 3;

/// Effective settings of one invocation: defaults, overlaid by the JSON
/// config file when given, overlaid by explicit flags (flags win).
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
  std::string data_path;
  std::string model_path;
  std::string trace_path;
  std::string data_format = "trajectory";  // or "sensor"

  ModelSpec model{3, 5};
  GibbsConfig gibbs;
  SyntheticConfig synthetic;

  int failure_window = 5;
  std::optional<int> failure_state_override;  // 1-based, as on disk

  int rul_paths = 100;
  long rul_max_steps = 10000;
  bool rul_sampled_durations = false;

  int eval_rul_cap = 130;
  int eval_stride = 25;
};

/// Overlays `config` with the JSON file at `path`.
void apply_config_file(RunConfig& config, const std::string& path);

int cmd_simulate(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_decode(const RunConfig& config);
int cmd_predict_rul(const RunConfig& config);
int cmd_eval(const RunConfig& config);

/// Maps an exception to the documented exit codes and prints the message to
/// stderr: input problems exit 2, numerical failures 3.
int run_guarded(const std::function<int()>& body);

}  // namespace hohsmm
