#pragma once

#include <span>
#include <vector>

#include "hohsmm/sampler.hpp"

namespace hohsmm {

struct DecodeResult {
  LabeledSegmentation segmentation;  // states hold the decoded modes
  std::vector<std::vector<int>> state_samples;  // per segment
  std::vector<int> decoded;
  double alpha_star_local = 0.0;
  // Decoded runs are reported unmerged; this counts adjacent equal pairs.
  int adjacent_equal_decoded = 0;
};

/// Most frequent value; ties go to the smallest state index.
int mode_per_segment(std::span<const int> samples);

/// Decodes one held-out sequence against a trained model. Each iteration
/// draws a jump threshold from the model's stored support, segments with the
/// trained cluster rule, initializes the lag allocations from the learned pi,
/// Gibbs-updates states then allocations while cycling through the stored
/// posterior draws of (lambda_bar, pi, theta), and moves the threshold by the
/// same likelihood rule as training. After the local threshold mean is fixed,
/// a final run collects state samples and each segment reports its mode.
/// With no stored draws the model's point parameters act as a single draw.
DecodeResult decode(const HohsmmModel& model, const PosteriorDraws& draws,
                    const Trajectory& traj, const GibbsConfig& config,
                    Rng& rng);

}  // namespace hohsmm
