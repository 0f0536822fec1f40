#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hohsmm {

using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed);

/// Engine for an independent stream derived from (seed, stream). Streams with
/// distinct ids are usable concurrently without coordinating draw order.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);

double uniform_real(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi);

/// Index draw from unnormalized non-negative weights. Throws NumericError if
/// every weight is zero.
int sample_categorical(Rng& rng, std::span<const double> weights);

/// Index draw from unnormalized log-weights. Throws NumericError if every
/// weight is -inf.
int sample_categorical_log(Rng& rng, std::span<const double> log_weights);

/// Dirichlet draw. Components falling below `floor` are clamped up before the
/// normalization so downstream logs stay finite.
std::vector<double> sample_dirichlet(Rng& rng,
                                     std::span<const double> concentration,
                                     double floor = 1e-300);

/// Trials-to-first-success geometric draw, support {1, 2, ...}. success_prob
/// of 1 (or more) returns 1 deterministically.
long geometric_trials(Rng& rng, double success_prob);

/// Poisson draw conditioned on a strictly positive outcome.
long positive_poisson(Rng& rng, double intensity);

/// Number of successes in the sequential scheme x_r ~ Bernoulli(w / (r-1+w)),
/// r = 1..n. Zero when n == 0; always 1 when n == 1 and w > 0.
long crt_table_count(Rng& rng, long n, double weight);

}  // namespace hohsmm
