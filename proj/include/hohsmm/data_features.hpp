#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hohsmm/model.hpp"
#include "hohsmm/segmentation.hpp"

namespace hohsmm {

struct SyntheticConfig {
  int num_states = 3;
  int order = 3;  // true order of the generating chain
  int num_sequences = 3;
  int t_min = 800;
  int t_max = 1000;
  std::vector<double> mu{-3.0, 0.0, 3.0};
  std::vector<double> sigma{0.5, 0.5, 0.5};
  std::vector<double> xi{15.0, 10.0, 5.0};
  // When set, the transition construction uses its own stream so the tensor
  // is reproducible independently of the trajectory draws.
  std::optional<std::uint64_t> tensor_seed;

  void validate() const;
};

struct SyntheticGroundTruth {
  TransitionTensor tensor;  // full-order truth
  EmissionParams emissions;
  DurationParams durations;
  std::vector<std::vector<int>> states;     // per sequence
  std::vector<std::vector<int>> durations_per_seq;  // truncated at T_p
  std::vector<int> total_lengths;
  std::vector<int> num_segments;
};

/// Simulates full-order chains with excluded self-transitions, positive
/// Poisson durations truncated at the drawn sequence length, and normal
/// emissions. Each transition row is built by the squared-stick construction
/// v = u^2 / (u^2 + (1-u)^2).
std::pair<std::vector<Trajectory>, SyntheticGroundTruth> generate_synthetic(
    const SyntheticConfig& config, Rng& rng);

/// Sensor corpus in the run-to-failure text layout: unit, cycle, 3
/// operational settings, 21 sensor channels per row.
struct SensorTable {
  static constexpr int kNumSettings = 3;
  static constexpr int kNumSensors = 21;
  static constexpr int kNumColumns = kNumSettings + kNumSensors;

  struct Unit {
    std::string unit_id;
    std::vector<int> cycles;                 // strictly increasing
    std::vector<std::vector<double>> rows;   // kNumColumns wide
  };
  std::vector<Unit> units;

  static std::string column_name(int column);
  std::size_t total_rows() const;
};

/// Parses whitespace- or comma-delimited numeric rows. Rows are grouped by
/// unit (first-appearance order) and sorted by cycle; ragged rows, non-
/// numeric fields, and duplicate cycles are parse errors naming the line.
SensorTable load_sensor_csv(const std::string& path);

void write_sensor_csv(const SensorTable& table, const std::string& path);

/// First-principal-component fusion rule: per-column standardization stats
/// over pooled training rows plus the unit-norm leading eigenvector of their
/// correlation matrix, oriented so the fused score rises over unit life.
struct PcaRule {
  std::vector<int> retained;  // column indices into the sensor layout
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> loading;
  double explained_variance = 0.0;

  void validate() const;
};

/// Fits the fusion rule on pooled training rows. Constant candidate columns
/// are dropped; all candidates constant is an error.
PcaRule fit_pca(const SensorTable& table, std::span<const int> candidate_columns);

/// Default candidates: the 21 sensor channels.
PcaRule fit_pca(const SensorTable& table);

/// Applies the rule, yielding one univariate trajectory per unit.
std::vector<Trajectory> fpc_transform(const PcaRule& rule,
                                      const SensorTable& table);

/// Univariate trajectory CSV: header "unit,cycle,value". Units keep
/// first-appearance order; rows are cycle-sorted; duplicate cycles are parse
/// errors.
std::vector<Trajectory> load_trajectories_csv(const std::string& path);

void write_trajectories_csv(std::span<const Trajectory> trajectories,
                            const std::string& path);

}  // namespace hohsmm
