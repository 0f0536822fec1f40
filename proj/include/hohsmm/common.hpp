#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace hohsmm {

// Malformed input: files, configs, schema mismatches, violated preconditions.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical degeneracy: vanishing normalizers, censored estimates, non-finite
// likelihoods.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double logsumexp(std::span<const double> log_terms);

/// Percentile in [0,100] with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
double percentile_linear(std::span<const double> sorted, double pct);

/// Runs body(i) for i in [0, count). With threads > 1 the index range is
/// chunked across worker threads; the body must not touch shared mutable
/// state keyed on anything but i.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hohsmm
