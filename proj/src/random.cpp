#include "hohsmm/random.hpp"

#include <cmath>
#include <limits>

#include "hohsmm/common.hpp"

namespace hohsmm {

Rng make_rng(std::uint64_t seed) { return Rng(seed); }

Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

int sample_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w))
      throw NumericError("categorical weight negative or non-finite");
    total += w;
  }
  if (total <= 0.0) throw NumericError("categorical weights sum to zero");
  double u = uniform_real(rng, 0.0, total);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

int sample_categorical_log(Rng& rng, std::span<const double> log_weights) {
  double norm = logsumexp(log_weights);
  if (!std::isfinite(norm))
    throw NumericError("log-categorical weights all vanish");
  double u = uniform_real(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i] - norm);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(log_weights.size()) - 1;
}

std::vector<double> sample_dirichlet(Rng& rng,
                                     std::span<const double> concentration,
                                     double floor) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < concentration.size(); ++i) {
    if (concentration[i] <= 0.0)
      throw NumericError("non-positive Dirichlet concentration");
    std::gamma_distribution<double> g(concentration[i], 1.0);
    out[i] = std::max(g(rng), floor);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

long geometric_trials(Rng& rng, double success_prob) {
  if (success_prob >= 1.0) return 1;
  if (success_prob <= 0.0)
    throw NumericError("geometric success probability must be positive");
  std::geometric_distribution<long> g(success_prob);  // failures before success
  return g(rng) + 1;
}

long positive_poisson(Rng& rng, double intensity) {
  if (intensity <= 0.0) throw NumericError("non-positive Poisson intensity");
  std::poisson_distribution<long> p(intensity);
  for (;;) {
    long d = p(rng);
    if (d > 0) return d;
  }
}

long crt_table_count(Rng& rng, long n, double weight) {
  if (n < 0) throw InputError("negative occupancy count");
  if (n > 0 && weight <= 0.0)
    throw NumericError("non-positive table weight with occupied cell");
  long m = 0;
  for (long r = 1; r <= n; ++r) {
    double p = weight / (static_cast<double>(r - 1) + weight);
    if (uniform_real(rng, 0.0, 1.0) < p) ++m;
  }
  return m;
}

}  // namespace hohsmm
