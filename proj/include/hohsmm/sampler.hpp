#pragma once

#include <span>
#include <vector>

#include "hohsmm/model.hpp"
#include "hohsmm/segmentation.hpp"

namespace hohsmm {

struct GibbsConfig {
  int outer_iters = 50;    // threshold proposals
  int stage1_iters = 200;  // sweeps while the lag structure is searched
  int stage2_iters = 200;  // sweeps with the lag structure fixed
  double burn_in = 0.5;    // fraction of sweeps (and outer iters) discarded
  Hyperparams hyper;
  double anneal_init = 10.0;  // state-update temperature at sweep 0
  double anneal_decay = 0.9;  // per-sweep multiplier, floored at 1

  void validate() const;
};

/// Transition counts n[(h1..hq)][c] under the current states and allocations.
/// The diagonal n[(i,...)][i] is structurally zero. m holds the per-cell
/// table counts from the latest base-measure update, m0 their per-state sums.
struct TransitionCounts {
  int C = 0;
  std::vector<int> k;
  std::vector<long> n;      // num_rows * C
  std::vector<long> n_row;  // per-row totals
  std::vector<long> m;      // num_rows * C, filled by sample_lambda0
  std::vector<long> m0;     // per-state sums of m

  std::size_t num_rows() const;
  std::size_t row_index(std::span<const int> tuple) const;
};

/// Per-segment sufficient statistics of a univariate sequence.
struct SegmentStats {
  long n = 0;
  double sum = 0.0;
  double sumsq = 0.0;
};

std::vector<SegmentStats> make_segment_stats(const Trajectory& traj,
                                             const LabeledSegmentation& seg);

/// Emission log-likelihood of a whole segment via its sufficient statistics.
double segment_loglik(const SegmentStats& stats, const EmissionParams& theta,
                      int state);

/// Counts transitions into every segment with a full lag history. Requires
/// the lag-1 allocation to equal the previous state everywhere (consistency
/// error otherwise). Sequences with at most q segments contribute nothing.
TransitionCounts count_transitions(
    const std::vector<std::vector<int>>& states_per_seq,
    const std::vector<std::vector<std::vector<int>>>& z_per_seq,
    const LagSpec& lags, int C);

/// One conjugate row update. Draws the geometric auxiliaries rho_s (trials
/// convention, support {1,2,...}) with success probability 1 - row[excluded],
/// then replaces the row with a Dirichlet draw whose pseudo-counts are
/// alpha*lambda0(c) + n(c) off the excluded index and alpha*lambda0(i) plus
/// the summed geometric excess sum(rho_s - 1) at it. The excess form keeps
/// the update stationary for the renormalized row; the excluded-index choice
/// never affects the law of the renormalized row either way.
///
/// The first overload also writes the renormalized row (zero at the excluded
/// index) into bar_row, built from the same underlying gamma draws. That form
/// stays well defined even when the excluded index soaks up nearly all mass,
/// which small prior concentrations produce routinely on unvisited rows.
void sample_lambda_row(std::span<const long> row_counts,
                       std::span<const double> lambda0, double alpha_conc,
                       int excluded, std::span<double> row,
                       std::span<double> bar_row, Rng& rng);
void sample_lambda_row(std::span<const long> row_counts,
                       std::span<const double> lambda0, double alpha_conc,
                       int excluded, std::span<double> row, Rng& rng);

/// Base-measure update: per cell, table counts m via the sequential Bernoulli
/// scheme with weight alpha*lambda0(c); then lambda0 ~ Dir(alpha0/C + m0).
/// Fills counts.m and counts.m0.
std::vector<double> sample_lambda0(TransitionCounts& counts,
                                   std::span<const double> lambda0_cur,
                                   const Hyperparams& hyper, Rng& rng);

/// Gibbs update of the lag >= 2 latent classes of one sequence.
/// z[j][t] (j 0-based lag index, t >= q) is resampled from
/// lambda_bar[(.., h at j, ..)](c_t) * pi[j][c_{t-j-1}][h].
void sample_allocations_z(const std::vector<int>& states,
                          const TransitionTensor& tensor,
                          const AllocationDistributions& pi,
                          std::vector<std::vector<int>>& z, Rng& rng);

/// Tempered per-segment state update for one sequence. Proposals come from
/// the full conditional with the emission term exponentiated by
/// 1/temperature and are accepted by a Metropolis-Hastings step (exact Gibbs
/// at temperature 1). Updating c_t also moves the pinned lag-1 class
/// z[0][t+1]. The first q segments lack full histories and are drawn from
/// their emission conditional restricted to differ from both neighbors.
void sample_states_c(std::span<const SegmentStats> stats,
                     const TransitionTensor& tensor,
                     const AllocationDistributions& pi,
                     const EmissionParams& theta,
                     std::vector<std::vector<int>>& z, std::vector<int>& c,
                     double temperature, Rng& rng);

struct NormalInvGammaPrior {
  double mean = 0.0;
  double pseudo_obs = 1.0;
  double shape = 1.0;
  double scale = 1.0;

  static NormalInvGammaPrior empirical(double grand_mean, double grand_var);
};

/// Conjugate normal-inverse-gamma draw of (mu, sigma) per state. States with
/// no observations fall back to the prior.
EmissionParams sample_emission_params(
    const std::vector<std::vector<double>>& obs_by_state,
    const NormalInvGammaPrior& prior, Rng& rng);

/// Duration intensities as per-state mean segment durations, pooled across
/// sequences. A state appearing in no segment is an error.
DurationParams duration_mle(
    const std::vector<LabeledSegmentation>& segmentations, int num_states);

struct Stage1Result {
  LagSpec k;                              // per-lag modal class counts
  std::vector<double> inclusion;          // per lag, fraction of draws with k > 1
  std::vector<std::vector<int>> k_draws;  // recorded per sweep
  std::vector<std::vector<int>> partitions;  // final hard class of each state, per lag
  TransitionTensor tensor;                // final chain state, seeds stage 2
  EmissionParams theta;
  std::vector<std::vector<int>> states;
};

/// Lag-structure search under hard allocation. Per sweep and lag, proposes a
/// single move (split one state off a class, merge two classes, or move one
/// state between classes) and accepts by the marginal likelihood of the
/// transition counts times the penalty prior p(k_j) ~ exp(-phi * j * k_j),
/// with proposals treated as symmetric.
Stage1Result stage1_determine_k(std::span<const Trajectory> trajectories,
                                const std::vector<LabeledSegmentation>& segs,
                                int num_states, int max_order,
                                const GibbsConfig& config, Rng& rng);

/// One stored sweep of the second stage.
struct Draw {
  TransitionTensor tensor;
  AllocationDistributions pi;
  EmissionParams theta;
  std::vector<std::vector<int>> c;
  std::vector<std::vector<std::vector<int>>> z;  // [seq][lag][segment], -1 where undefined
  double loglik = 0.0;
};

struct PosteriorDraws {
  LagSpec k;
  std::vector<double> inclusion;
  std::vector<Draw> draws;  // final run, past burn-in
  std::vector<LabeledSegmentation> final_segmentations;  // states = per-segment modes
  std::vector<std::vector<int>> decoded_train;
  std::vector<double> alpha_chain;
  std::vector<std::uint8_t> alpha_accepted;
  std::vector<double> outer_loglik;
  double alpha_star = 0.0;
  JumpSupport support;
};

/// Monte Carlo log marginal likelihood: log of the averaged per-draw data
/// likelihoods, evaluated with log-sum-exp over the stored draws.
double marginal_likelihood_estimate(const PosteriorDraws& draws,
                                    std::span<const Trajectory> trajectories);

struct AlphaUpdate {
  double alpha = 0.0;
  double loglik = 0.0;
  bool accepted = false;
};

/// Threshold move: accept the proposal with probability
/// min(1, exp(loglik_prop - loglik_cur)).
AlphaUpdate mh_update_alpha(double alpha_cur, double loglik_cur,
                            double alpha_prop, double loglik_prop, Rng& rng);

struct FitResult {
  HohsmmModel model;
  PosteriorDraws draws;
};

/// Full two-stage fit. Each outer iteration draws a jump threshold from the
/// pooled support, re-segments, searches the lag structure, samples the
/// remaining parameters, and accepts or rejects the threshold by the
/// estimated marginal likelihood. The post-burn-in mean threshold is then
/// frozen and the model refit at it; those draws are the ones stored.
FitResult fit(std::span<const Trajectory> trajectories, const ModelSpec& spec,
              const GibbsConfig& config, Rng& rng);

}  // namespace hohsmm
