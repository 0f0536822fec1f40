#pragma once

// Deterministic test data builders shared across the suites.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hohsmm/data_features.hpp"
#include "hohsmm/model.hpp"
#include "hohsmm/random.hpp"
#include "hohsmm/segmentation.hpp"

namespace fixtures {

inline hohsmm::Trajectory make_trajectory(std::vector<double> values,
                                          std::string unit = "u1") {
  hohsmm::Trajectory traj;
  traj.unit_id = std::move(unit);
  traj.values.reserve(values.size());
  for (double v : values) traj.values.push_back({v});
  return traj;
}

/// Valid model with Dirichlet(1) transition rows, Dirichlet(1) allocations,
/// evenly spread emissions, and ascending cluster centers.
inline hohsmm::HohsmmModel random_model(int C, const std::vector<int>& k,
                                        hohsmm::Rng& rng) {
  hohsmm::HohsmmModel model;
  model.spec.num_states = C;
  model.spec.max_order = static_cast<int>(k.size());
  model.lags.k = k;
  model.transitions = hohsmm::TransitionTensor::uniform(C, model.lags);
  std::vector<double> ones(C, 1.0);
  for (std::size_t r = 0; r < model.transitions.num_rows(); ++r) {
    auto draw = hohsmm::sample_dirichlet(rng, ones);
    std::copy(draw.begin(), draw.end(),
              model.transitions.lambda_row(r).begin());
  }
  model.transitions.recompute_bar();
  model.transitions.lambda0 = hohsmm::sample_dirichlet(rng, ones);
  model.allocations = hohsmm::AllocationDistributions::uniform(C, model.lags);
  for (int j = 1; j < model.lags.order(); ++j) {
    std::vector<double> conc(k[j], 1.0);
    for (int s = 0; s < C; ++s)
      model.allocations.pi[j][s] = hohsmm::sample_dirichlet(rng, conc);
  }
  model.emissions.mu.resize(C);
  model.emissions.sigma.assign(C, 0.5);
  model.durations.xi.resize(C);
  model.cluster_rule.resize(C);
  for (int s = 0; s < C; ++s) {
    model.emissions.mu[s] = -3.0 + 6.0 * s / std::max(1, C - 1);
    model.durations.xi[s] = 4.0 + s;
    model.cluster_rule[s] = {model.emissions.mu[s]};
  }
  model.alpha_star = 1.0;
  model.jump_support = {0.1, 3.0};
  model.failure_state = C - 1;
  model.validate();
  return model;
}

/// Seven-state degradation corpus with second-order memory. While the state
/// two steps back sits in the healthy lower half the walk wanders around its
/// current level; once that lag-2 state reaches the upper half the walk is
/// pushed hard toward the absorbing failure state 7. The lag-2 effect is a
/// clean two-class split {1,2,3} vs {4,5,6,7} and drives the dynamics, not
/// just a nuance of them. Sequences stop on first arrival at state 7.
/// Sensors respond affinely to the state with mixed signs; four channels are
/// constant and one is pure noise.
struct DegradationFixture {
  hohsmm::SensorTable train;
  hohsmm::SensorTable test;
  std::vector<std::vector<int>> train_cycle_states;  // per unit, per cycle
  std::vector<std::vector<int>> test_cycle_states;
  static constexpr int kNumStates = 7;
  static constexpr int kFailureState = 6;  // 0-based
};

namespace detail {

inline int lag2_class(int state) { return state >= 3 ? 1 : 0; }

inline std::vector<int> degradation_states(hohsmm::Rng& rng) {
  std::vector<int> states{0, 1};
  while (states.back() != DegradationFixture::kFailureState) {
    const int i = states.back();
    const int g = lag2_class(states[states.size() - 2]);
    // Healthy memory lets damage accumulate; degraded memory triggers a
    // partial repair. The walk cycles through the class boundary until an
    // unlucky double jump strands it next to failure with healthy memory.
    const int target = g ? std::max(0, i - 1) : std::min(6, i + 1);
    std::vector<double> w(7, 0.0);
    for (int j = 0; j < 7; ++j) {
      if (j == i) continue;
      w[j] = std::exp(-1.2 * std::abs(j - target));
    }
    states.push_back(hohsmm::sample_categorical(rng, w));
  }
  return states;
}

inline hohsmm::SensorTable::Unit degradation_unit(const std::string& id,
                                                  std::vector<int>& cycle_states,
                                                  hohsmm::Rng& rng) {
  static const double xi[7] = {12, 11, 10, 9, 8, 7, 6};
  // Slope of each sensor in the latent state; zeros are flat channels.
  double slope[21], noise[21];
  for (int m = 0; m < 21; ++m) {
    if (m < 8) slope[m] = 0.8 + 0.05 * m;
    else if (m < 14) slope[m] = -1.2 + 0.05 * (m - 8);
    else if (m < 16) slope[m] = 0.5;
    else slope[m] = 0.0;
    noise[m] = (m >= 17) ? 0.0 : 0.05;  // sensors 18..21 strictly constant
  }

  auto states = degradation_states(rng);
  hohsmm::SensorTable::Unit unit;
  unit.unit_id = id;
  std::normal_distribution<double> gauss(0.0, 1.0);
  int cycle = 0;
  for (int s : states) {
    long d = hohsmm::positive_poisson(rng, xi[s]);
    for (long i = 0; i < d; ++i) {
      std::vector<double> row(hohsmm::SensorTable::kNumColumns);
      for (int c = 0; c < hohsmm::SensorTable::kNumSettings; ++c)
        row[c] = 0.5 + 0.01 * gauss(rng);
      for (int m = 0; m < 21; ++m)
        row[hohsmm::SensorTable::kNumSettings + m] =
            10.0 + m + slope[m] * s + noise[m] * gauss(rng);
      unit.rows.push_back(std::move(row));
      unit.cycles.push_back(++cycle);
      cycle_states.push_back(s);
    }
  }
  return unit;
}

}  // namespace detail

inline DegradationFixture degradation_fixture(int train_units, int test_units,
                                              std::uint64_t seed) {
  DegradationFixture fx;
  for (int u = 0; u < train_units; ++u) {
    hohsmm::Rng rng = hohsmm::derive_rng(seed, u);
    fx.train_cycle_states.emplace_back();
    fx.train.units.push_back(detail::degradation_unit(
        "train-" + std::to_string(u + 1), fx.train_cycle_states.back(), rng));
  }
  for (int u = 0; u < test_units; ++u) {
    hohsmm::Rng rng = hohsmm::derive_rng(seed, 1000 + u);
    fx.test_cycle_states.emplace_back();
    fx.test.units.push_back(detail::degradation_unit(
        "test-" + std::to_string(u + 1), fx.test_cycle_states.back(), rng));
  }
  return fx;
}

/// Expands per-segment labels to per-cycle labels.
inline std::vector<int> expand_labels(const hohsmm::LabeledSegmentation& seg) {
  std::vector<int> out;
  for (int i = 0; i < seg.num_segments(); ++i)
    out.insert(out.end(), seg.durations[i], seg.states[i]);
  return out;
}

}  // namespace fixtures
