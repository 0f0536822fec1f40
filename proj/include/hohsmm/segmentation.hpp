#pragma once

#include <span>
#include <string>
#include <vector>

#include "hohsmm/model.hpp"

namespace hohsmm {

/// One observation sequence. Multivariate rows are allowed before feature
/// fusion; the sampler itself requires univariate values.
struct Trajectory {
  std::string unit_id;
  std::vector<std::vector<double>> values;

  int length() const { return static_cast<int>(values.size()); }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values[0].size()); }
  double scalar(int t) const { return values[t][0]; }

  void validate() const;
};

/// Contiguous segmentation with one label per segment. boundaries are 0-based
/// segment start indices (boundaries[0] == 0), durations sum to the sequence
/// length, and adjacent labels always differ once merged.
struct LabeledSegmentation {
  std::vector<int> boundaries;
  std::vector<int> durations;
  std::vector<int> states;

  int num_segments() const { return static_cast<int>(states.size()); }
  void validate(int total_length, int num_states) const;
};

/// Pooled 5th/95th percentiles of adjacent-observation distances across all
/// sequences. Throws NumericError when the support is degenerate (all
/// distances equal).
JumpSupport jump_support(std::span<const Trajectory> trajectories);

/// 0-based indices t >= 1 with ||y_t - y_{t-1}|| > alpha; each starts a new
/// segment.
std::vector<int> detect_changepoints(const Trajectory& traj, double alpha);

/// [0] + changepoints.
std::vector<int> segment_boundaries(const Trajectory& traj, double alpha);

std::vector<std::vector<double>> segment_centers(
    const Trajectory& traj, std::span<const int> boundaries);

/// K-means over segment centers: C clusters, 10 seeded restarts, best
/// within-cluster sum of squares kept, centers sorted ascending by first
/// coordinate. Throws InputError when fewer than C distinct centers exist.
std::vector<std::vector<double>> fit_cluster_rule(
    const std::vector<std::vector<double>>& centers, int num_clusters,
    Rng& rng);

/// Labels each segment by its nearest rule center, then merges adjacent
/// segments sharing a label (summing durations).
LabeledSegmentation label_and_merge(
    const Trajectory& traj, std::span<const int> boundaries,
    const std::vector<std::vector<double>>& cluster_rule);

}  // namespace hohsmm
