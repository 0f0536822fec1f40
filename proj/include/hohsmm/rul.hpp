#pragma once

#include <span>
#include <vector>

#include "hohsmm/sampler.hpp"

namespace hohsmm {

struct FailureSpec {
  int window = 5;         // trailing decoded states examined per sequence
  int failure_state = 0;  // 0-based
};

struct RulEstimate {
  double mean_rul = 0.0;
  std::vector<double> per_path_ruls;  // censored paths excluded
  int num_paths = 0;                  // paths requested
  std::vector<long> path_lengths;     // super-states drawn per kept path
  int num_censored = 0;
};

/// Failure state as the two-level mode of the trailing decoded states: per
/// sequence, the mode of the last `window` decoded super-states; across
/// sequences, the mode of those. Ties at either level go to the state with
/// the most extreme (largest) cluster index, the degradation endpoint under
/// the ascending-center state ordering. Sequences with fewer than `window`
/// segments are an error.
int identify_failure_state(const PosteriorDraws& draws, int window);

struct PathResult {
  std::vector<int> states;
  double rul = 0.0;
  bool censored = false;
};

/// Draws successor super-states from the model until the failure state is
/// reached, accumulating the mean duration of every drawn state including the
/// failure state itself. `tail` holds the last q decoded states, oldest
/// first; a tail already ending at the failure state yields zero immediately.
/// Paths exceeding max_steps come back censored, not as an error.
PathResult simulate_path(const HohsmmModel& model, std::span<const int> tail,
                         int failure_state, Rng& rng, long max_steps = 10000,
                         bool sampled_durations = false);

/// Monte Carlo estimate over num_paths independent paths. Censored paths are
/// excluded from the mean and counted; all paths censored is an error.
RulEstimate estimate_rul(const HohsmmModel& model, std::span<const int> tail,
                         int failure_state, int num_paths, Rng& rng,
                         long max_steps = 10000,
                         bool sampled_durations = false, int threads = 1);

/// Piecewise-linear benchmark: RUL(t) = min(cap, total_life - t) for
/// t = 1..total_life.
std::vector<double> piecewise_true_rul(int total_life, int cap);

}  // namespace hohsmm
