#include "hohsmm/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hohsmm {

void Trajectory::validate() const {
  if (values.empty()) throw InputError("trajectory '" + unit_id + "' is empty");
  std::size_t d = values[0].size();
  if (d == 0) throw InputError("trajectory '" + unit_id + "' has zero-width rows");
  for (const auto& row : values) {
    if (row.size() != d)
      throw InputError("trajectory '" + unit_id + "' has ragged rows");
    for (double v : row)
      if (!std::isfinite(v))
        throw InputError("trajectory '" + unit_id + "' has a non-finite value");
  }
}

void LabeledSegmentation::validate(int total_length, int num_states) const {
  if (boundaries.size() != durations.size() ||
      boundaries.size() != states.size() || boundaries.empty())
    throw InputError("segmentation vectors are inconsistent");
  if (boundaries[0] != 0) throw InputError("first segment must start at 0");
  long total = 0;
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    if (durations[i] < 1) throw InputError("segment durations must be positive");
    if (boundaries[i] != total)
      throw InputError("segment boundaries disagree with durations");
    if (states[i] < 0 || states[i] >= num_states)
      throw InputError("segment label outside the state set");
    if (i > 0 && states[i] == states[i - 1])
      throw InputError("adjacent segments share a label after merging");
    total += durations[i];
  }
  if (total != total_length)
    throw InputError("segment durations do not cover the sequence");
}

namespace {

double row_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

JumpSupport jump_support(std::span<const Trajectory> trajectories) {
  std::vector<double> dists;
  for (const auto& traj : trajectories) {
    traj.validate();
    for (int t = 1; t < traj.length(); ++t)
      dists.push_back(row_distance(traj.values[t], traj.values[t - 1]));
  }
  if (dists.empty())
    throw InputError("no adjacent observation pairs to build a jump support");
  std::sort(dists.begin(), dists.end());
  JumpSupport support;
  support.alpha_min = percentile_linear(dists, 5.0);
  support.alpha_max = percentile_linear(dists, 95.0);
  if (!(support.alpha_min < support.alpha_max))
    throw NumericError("degenerate jump support: adjacent distances carry no spread");
  return support;
}

std::vector<int> detect_changepoints(const Trajectory& traj, double alpha) {
  traj.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw InputError("jump threshold must be finite and non-negative");
  std::vector<int> cps;
  for (int t = 1; t < traj.length(); ++t) {
    if (row_distance(traj.values[t], traj.values[t - 1]) > alpha)
      cps.push_back(t);
  }
  return cps;
}

std::vector<int> segment_boundaries(const Trajectory& traj, double alpha) {
  std::vector<int> bounds{0};
  auto cps = detect_changepoints(traj, alpha);
  bounds.insert(bounds.end(), cps.begin(), cps.end());
  return bounds;
}

std::vector<std::vector<double>> segment_centers(
    const Trajectory& traj, std::span<const int> boundaries) {
  if (boundaries.empty() || boundaries[0] != 0)
    throw InputError("boundaries must start at 0");
  const int T = traj.length();
  const int D = traj.dim();
  std::vector<std::vector<double>> centers;
  centers.reserve(boundaries.size());
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    int lo = boundaries[i];
    int hi = i + 1 < boundaries.size() ? boundaries[i + 1] : T;
    if (lo >= hi) throw InputError("empty segment in boundary list");
    std::vector<double> center(D, 0.0);
    for (int t = lo; t < hi; ++t)
      for (int d = 0; d < D; ++d) center[d] += traj.values[t][d];
    for (double& v : center) v /= static_cast<double>(hi - lo);
    centers.push_back(std::move(center));
  }
  return centers;
}

namespace {

struct KmeansRun {
  std::vector<std::vector<double>> centers;
  double wcss = std::numeric_limits<double>::infinity();
};

KmeansRun lloyd_once(const std::vector<std::vector<double>>& points, int k,
                     Rng& rng) {
  const int n = static_cast<int>(points.size());
  const int D = static_cast<int>(points[0].size());
  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.push_back(points[uniform_int(rng, 0, n - 1)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_distance(points[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[uniform_int(rng, 0, n - 1)]);
      continue;
    }
    double u = uniform_real(rng, 0.0, total);
    double acc = 0.0;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = sq_distance(points[i], centers[c]);
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(D, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int d = 0; d < D; ++d) sums[assign[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seat the empty cluster at the point farthest from its center.
        int far = 0;
        double fard = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = sq_distance(points[i], centers[assign[i]]);
          if (d > fard) {
            fard = d;
            far = i;
          }
        }
        centers[c] = points[far];
        changed = true;
        continue;
      }
      for (int d = 0; d < D; ++d) centers[c][d] = sums[c][d] / counts[c];
    }
    if (!changed) break;
  }

  KmeansRun run;
  run.centers = std::move(centers);
  run.wcss = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : run.centers) best = std::min(best, sq_distance(points[i], c));
    run.wcss += best;
  }
  return run;
}

}  // namespace

std::vector<std::vector<double>> fit_cluster_rule(
    const std::vector<std::vector<double>>& centers, int num_clusters,
    Rng& rng) {
  if (num_clusters < 1) throw InputError("cluster count must be positive");
  if (static_cast<int>(centers.size()) < num_clusters)
    throw InputError("under-populated clustering: " +
                     std::to_string(centers.size()) + " centers for " +
                     std::to_string(num_clusters) + " clusters");
  std::vector<std::vector<double>> distinct;
  for (const auto& c : centers)
    if (std::find(distinct.begin(), distinct.end(), c) == distinct.end())
      distinct.push_back(c);
  if (static_cast<int>(distinct.size()) < num_clusters)
    throw InputError("under-populated clustering: only " +
                     std::to_string(distinct.size()) +
                     " distinct centers for " + std::to_string(num_clusters) +
                     " clusters");

  KmeansRun best;
  for (int restart = 0; restart < 10; ++restart) {
    KmeansRun run = lloyd_once(centers, num_clusters, rng);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  std::sort(best.centers.begin(), best.centers.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });
  return best.centers;
}

LabeledSegmentation label_and_merge(
    const Trajectory& traj, std::span<const int> boundaries,
    const std::vector<std::vector<double>>& cluster_rule) {
  if (cluster_rule.empty()) throw InputError("cluster rule is empty");
  auto centers = segment_centers(traj, boundaries);
  std::vector<int> labels(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    int best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cluster_rule.size(); ++c) {
      double d = sq_distance(centers[i], cluster_rule[c]);
      if (d < bestd) {
        bestd = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
  }

  LabeledSegmentation seg;
  const int T = traj.length();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int lo = boundaries[i];
    int hi = i + 1 < boundaries.size() ? boundaries[static_cast<int>(i) + 1] : T;
    if (!seg.states.empty() && seg.states.back() == labels[i]) {
      seg.durations.back() += hi - lo;
      continue;
    }
    seg.boundaries.push_back(lo);
    seg.durations.push_back(hi - lo);
    seg.states.push_back(labels[i]);
  }
  seg.validate(T, static_cast<int>(cluster_rule.size()));
  return seg;
}

}  // namespace hohsmm
