#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hohsmm/common.hpp"
#include "hohsmm/random.hpp"

namespace hohsmm {

enum class EmissionFamily : std::uint8_t { Normal };
enum class DurationFamily : std::uint8_t { Poisson };

struct ModelSpec {
  int num_states = 0;  // C >= 2
  int max_order = 0;   // q >= 1, number of lags considered
  EmissionFamily emission_family = EmissionFamily::Normal;
  DurationFamily duration_family = DurationFamily::Poisson;
  std::uint64_t random_seed = 0;

  void validate() const;
};

/// Latent class counts per lag. k[0] is the lag-1 count and always equals C:
/// the previous state enters the transition law untouched. A lag j (1-based)
/// is important iff k[j-1] > 1.
struct LagSpec {
  std::vector<int> k;

  int order() const { return static_cast<int>(k.size()); }
  bool important(int lag_1based) const { return k[lag_1based - 1] > 1; }
  void validate(int num_states) const;
};

/// Transition law over latent history tuples (h1, h2, ..., hq) where h1 is
/// the previous state and hj (j >= 2) is the lag-j latent class. Rows are
/// stored row-major over the tuple, each row holding C probabilities.
///
/// `lambda` rows are unconstrained simplex draws; `lambda_bar` is the image
/// with the h1 self-transition excluded and the rest renormalized; `lambda0`
/// is the shared base measure over next states.
struct TransitionTensor {
  int C = 0;
  std::vector<int> k;
  std::vector<double> lambda;
  std::vector<double> lambda_bar;
  std::vector<double> lambda0;

  static TransitionTensor uniform(int C, const LagSpec& lags);

  int order() const { return static_cast<int>(k.size()); }
  std::size_t num_rows() const;
  std::size_t row_index(std::span<const int> tuple) const;
  /// First tuple component (the previous state) of a row index.
  int excluded_state(std::size_t row) const;

  std::span<const double> lambda_row(std::size_t row) const;
  std::span<double> lambda_row(std::size_t row);
  std::span<const double> lambda_bar_row(std::size_t row) const;
  std::span<double> lambda_bar_row(std::size_t row);

  /// Rebuilds lambda_bar from lambda row by row. Throws NumericError when a
  /// row puts essentially all mass on its own state.
  void recompute_bar();

  void validate() const;
};

/// Per-lag allocation distributions pi[j][s][h]: probability that state s
/// allocates to latent class h at lag j+1. pi[0][s] is the one-hot vector at
/// s, pinning the lag-1 class to the previous state.
struct AllocationDistributions {
  std::vector<std::vector<std::vector<double>>> pi;

  static AllocationDistributions uniform(int C, const LagSpec& lags);
  void validate(int C, const LagSpec& lags) const;
};

struct EmissionParams {
  std::vector<double> mu;
  std::vector<double> sigma;

  void validate() const;
};

struct DurationParams {
  std::vector<double> xi;

  void validate() const;
};

struct Hyperparams {
  double alpha_conc = 1.0;    // concentration of the row prior around lambda0
  double alpha0_conc = 1.0;   // concentration of the lambda0 prior
  std::vector<double> gamma;  // per-lag allocation prior; empty -> 1/C at fit
  double phi = 1.0;           // lag penalty in the latent-class-count prior

  void validate() const;
};

struct JumpSupport {
  double alpha_min = 0.0;
  double alpha_max = 0.0;
};

struct HohsmmModel {
  ModelSpec spec;
  LagSpec lags;
  TransitionTensor transitions;
  AllocationDistributions allocations;
  EmissionParams emissions;
  DurationParams durations;
  double alpha_star = 0.0;
  // C segment-center vectors, ascending by first coordinate; labels new
  // segments during decoding.
  std::vector<std::vector<double>> cluster_rule;
  std::optional<int> failure_state;  // 0-based
  JumpSupport jump_support;

  void validate() const;
};

/// Renormalizes a probability row after removing the self-transition mass of
/// state `excluded`. Throws NumericError when row[excluded] >= 1 - 1e-12.
std::vector<double> exclude_self_transitions(std::span<const double> row,
                                             int excluded);

/// Probability of `next` given the last q states. `history` is ordered oldest
/// first, so history.back() is the immediately preceding state. Marginalizes
/// over the lag >= 2 latent classes; the lag-1 class is pinned to
/// history.back().
double transition_prob(const HohsmmModel& model, std::span<const int> history,
                       int next);

std::vector<double> transition_distribution(const HohsmmModel& model,
                                            std::span<const int> history);

/// Distribution of the state r steps ahead, by dynamic programming over
/// history tuples (never by enumerating state paths).
std::vector<double> r_step_transition(const HohsmmModel& model,
                                      std::span<const int> history, int r);

double emission_loglik(const EmissionParams& emissions, int state, double y);

/// Poisson log-pmf of duration d in state `state`. d < 1 is a domain error.
double duration_logpmf(const DurationParams& durations, int state, long d);

double duration_mean(const DurationParams& durations, int state);

int sample_next_state(const HohsmmModel& model, std::span<const int> history,
                      Rng& rng);

/// Dense C^q x C table of transition_distribution over all histories; used
/// where many draws share one model (path simulation, multi-step transforms).
class TransitionTable {
 public:
  explicit TransitionTable(const HohsmmModel& model);

  int num_states() const { return C_; }
  int order() const { return q_; }
  std::size_t num_histories() const { return rows_.size() / C_; }

  std::size_t history_index(std::span<const int> history) const;
  /// Index of the history obtained by appending `next` and dropping the
  /// oldest state.
  std::size_t shift(std::size_t history, int next) const;
  std::span<const double> row(std::size_t history) const;

 private:
  int C_ = 0;
  int q_ = 0;
  std::size_t drop_ = 1;  // C^(q-1)
  std::vector<double> rows_;
};

}  // namespace hohsmm
