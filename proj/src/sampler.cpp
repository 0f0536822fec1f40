#include "hohsmm/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

#include "hohsmm/decoder.hpp"

namespace hohsmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogFloor = 1e-300;

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

}  // namespace

void GibbsConfig::validate() const {
  if (outer_iters < 1) throw InputError("outer_iters must be at least 1");
  if (stage1_iters < 1 || stage2_iters < 1)
    throw InputError("stage iteration counts must be at least 1");
  if (!(burn_in >= 0.0) || burn_in >= 1.0)
    throw InputError("burn_in must lie in [0, 1)");
  if (!(anneal_init >= 1.0)) throw InputError("anneal_init must be at least 1");
  if (!(anneal_decay > 0.0) || anneal_decay > 1.0)
    throw InputError("anneal_decay must lie in (0, 1]");
  hyper.validate();
}

std::size_t TransitionCounts::num_rows() const {
  std::size_t rows = 1;
  for (int kj : k) rows *= static_cast<std::size_t>(kj);
  return rows;
}

std::size_t TransitionCounts::row_index(std::span<const int> tuple) const {
  std::size_t idx = 0;
  for (std::size_t j = 0; j < k.size(); ++j)
    idx = idx * static_cast<std::size_t>(k[j]) + static_cast<std::size_t>(tuple[j]);
  return idx;
}

std::vector<SegmentStats> make_segment_stats(const Trajectory& traj,
                                             const LabeledSegmentation& seg) {
  if (traj.dim() != 1)
    throw InputError("segment statistics require univariate trajectories");
  std::vector<SegmentStats> stats(seg.num_segments());
  for (int i = 0; i < seg.num_segments(); ++i) {
    int lo = seg.boundaries[i];
    int hi = lo + seg.durations[i];
    SegmentStats& s = stats[i];
    s.n = hi - lo;
    for (int t = lo; t < hi; ++t) {
      double y = traj.scalar(t);
      s.sum += y;
      s.sumsq += y * y;
    }
  }
  return stats;
}

double segment_loglik(const SegmentStats& stats, const EmissionParams& theta,
                      int state) {
  double mu = theta.mu[state];
  double sg = theta.sigma[state];
  double nd = static_cast<double>(stats.n);
  double ss = stats.sumsq - 2.0 * mu * stats.sum + nd * mu * mu;
  return -0.5 * nd * std::log(2.0 * std::numbers::pi) - nd * std::log(sg) -
         0.5 * ss / (sg * sg);
}

TransitionCounts count_transitions(
    const std::vector<std::vector<int>>& states_per_seq,
    const std::vector<std::vector<std::vector<int>>>& z_per_seq,
    const LagSpec& lags, int C) {
  if (states_per_seq.size() != z_per_seq.size())
    throw InputError("state and allocation sequences disagree in count");
  const int q = lags.order();
  TransitionCounts counts;
  counts.C = C;
  counts.k = lags.k;
  std::size_t rows = counts.num_rows();
  counts.n.assign(rows * C, 0);
  counts.n_row.assign(rows, 0);
  std::vector<int> tuple(q);
  for (std::size_t p = 0; p < states_per_seq.size(); ++p) {
    const auto& c = states_per_seq[p];
    const auto& z = z_per_seq[p];
    const int S = static_cast<int>(c.size());
    if (S <= q) continue;
    if (static_cast<int>(z.size()) != q)
      throw InputError("allocation sequence missing lags");
    for (int t = q; t < S; ++t) {
      if (z[0][t] != c[t - 1])
        throw InputError(
            "inconsistent allocations: lag-1 class differs from the previous "
            "state at segment " + std::to_string(t + 1));
      for (int j = 0; j < q; ++j) {
        int h = z[j][t];
        if (h < 0 || h >= lags.k[j])
          throw InputError("allocation class outside the lag spec");
        tuple[j] = h;
      }
      if (c[t] == c[t - 1])
        throw InputError("self-transition encountered in the state sequence");
      std::size_t row = counts.row_index(tuple);
      ++counts.n[row * C + c[t]];
      ++counts.n_row[row];
    }
  }
  return counts;
}

void sample_lambda_row(std::span<const long> row_counts,
                       std::span<const double> lambda0, double alpha_conc,
                       int excluded, std::span<double> row,
                       std::span<double> bar_row, Rng& rng) {
  const int C = static_cast<int>(row.size());
  if (excluded < 0 || excluded >= C)
    throw std::out_of_range("excluded state outside the state set");
  long n = 0;
  for (int c = 0; c < C; ++c) n += row_counts[c];
  // Geometric auxiliaries soak up the renormalization of the excluded mass.
  double excess = 0.0;
  if (n > 0) {
    double success = std::clamp(1.0 - row[excluded], 1e-9, 1.0);
    for (long s = 0; s < n; ++s)
      excess += static_cast<double>(geometric_trials(rng, success) - 1);
  }
  // Both images come from one set of gamma draws: the full row normalizes
  // everything, the excluded image normalizes the off-diagonal block. The
  // floor keeps that block from underflowing to an exact zero sum, which
  // gamma shapes far below one would otherwise reach.
  double total = 0.0;
  double off = 0.0;
  for (int c = 0; c < C; ++c) {
    double conc = alpha_conc * lambda0[c] +
                  (c == excluded ? excess : static_cast<double>(row_counts[c]));
    if (conc <= 0.0) throw NumericError("non-positive Dirichlet concentration");
    std::gamma_distribution<double> g(conc, 1.0);
    double draw = std::max(g(rng), 1e-290);
    row[c] = draw;
    total += draw;
    if (c != excluded) off += draw;
  }
  for (int c = 0; c < C; ++c) {
    bar_row[c] = c == excluded ? 0.0 : row[c] / off;
    row[c] /= total;
  }
}

void sample_lambda_row(std::span<const long> row_counts,
                       std::span<const double> lambda0, double alpha_conc,
                       int excluded, std::span<double> row, Rng& rng) {
  std::vector<double> bar(row.size());
  sample_lambda_row(row_counts, lambda0, alpha_conc, excluded, row, bar, rng);
}

std::vector<double> sample_lambda0(TransitionCounts& counts,
                                   std::span<const double> lambda0_cur,
                                   const Hyperparams& hyper, Rng& rng) {
  const int C = counts.C;
  std::size_t rows = counts.num_rows();
  counts.m.assign(rows * C, 0);
  counts.m0.assign(C, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < C; ++c) {
      long n = counts.n[r * C + c];
      if (n == 0) continue;
      long m = crt_table_count(rng, n, hyper.alpha_conc * lambda0_cur[c]);
      counts.m[r * C + c] = m;
      counts.m0[c] += m;
    }
  }
  std::vector<double> conc(C);
  for (int c = 0; c < C; ++c)
    conc[c] = hyper.alpha0_conc / C + static_cast<double>(counts.m0[c]);
  return sample_dirichlet(rng, conc);
}

void sample_allocations_z(const std::vector<int>& states,
                          const TransitionTensor& tensor,
                          const AllocationDistributions& pi,
                          std::vector<std::vector<int>>& z, Rng& rng) {
  const int q = tensor.order();
  const int C = tensor.C;
  const int S = static_cast<int>(states.size());
  std::vector<int> tuple(q);
  for (int t = q; t < S; ++t) {
    for (int j = 0; j < q; ++j) tuple[j] = z[j][t];
    for (int j = 1; j < q; ++j) {
      const int kj = tensor.k[j];
      if (kj == 1) continue;
      const int w = states[t - j - 1];
      std::vector<double> weights(kj);
      double total = 0.0;
      for (int h = 0; h < kj; ++h) {
        tuple[j] = h;
        std::size_t row = tensor.row_index(tuple);
        weights[h] = tensor.lambda_bar[row * C + states[t]] * pi.pi[j][w][h];
        total += weights[h];
      }
      int pick;
      if (total > 0.0) {
        pick = sample_categorical(rng, weights);
      } else {
        // Underflow fallback: same conditional in log space.
        std::vector<double> lw(kj);
        for (int h = 0; h < kj; ++h) {
          tuple[j] = h;
          std::size_t row = tensor.row_index(tuple);
          lw[h] = safe_log(tensor.lambda_bar[row * C + states[t]]) +
                  safe_log(pi.pi[j][w][h]);
        }
        pick = sample_categorical_log(rng, lw);
      }
      tuple[j] = pick;
      z[j][t] = pick;
    }
  }
}

namespace {

// Tempered Metropolis-within-Gibbs state pass shared by the soft and hard
// allocation modes. TransFn(t, candidate, log_weight_out) must add every
// transition term touching c_t; CommitFn(t) runs after c[t] is finalized.
template <typename TransFn, typename CommitFn>
void states_pass(std::span<const SegmentStats> stats,
                 const EmissionParams& theta, int C, int q,
                 TransFn&& add_transition_terms, CommitFn&& on_commit,
                 std::vector<int>& c, double temperature, Rng& rng) {
  const int S = static_cast<int>(c.size());
  std::vector<double> logq(C);
  std::vector<double> emis(C);
  for (int t = 0; t < S; ++t) {
    const int prev = t > 0 ? c[t - 1] : -1;
    const int nxt = t + 1 < S ? c[t + 1] : -1;
    for (int s = 0; s < C; ++s) emis[s] = segment_loglik(stats[t], theta, s);
    if (t < q) {
      // No full history yet: emission conditional, kept off both neighbors.
      for (int s = 0; s < C; ++s)
        logq[s] = (s == prev || s == nxt) ? kNegInf : emis[s] / temperature;
    } else {
      for (int s = 0; s < C; ++s) {
        logq[s] = emis[s] / temperature;
        add_transition_terms(t, s, logq[s]);
      }
    }
    int prop = sample_categorical_log(rng, logq);
    int cur = c[t];
    bool accept = true;
    if (temperature > 1.0 && prop != cur) {
      double log_acc = (1.0 - 1.0 / temperature) * (emis[prop] - emis[cur]);
      if (log_acc < 0.0)
        accept = std::log(uniform_real(rng, 0.0, 1.0)) < log_acc;
    }
    if (accept) c[t] = prop;
    on_commit(t);
  }
}

using Partitions = std::vector<std::vector<int>>;

Partitions identity_partitions(int C, int q) {
  Partitions part(q, std::vector<int>(C, 0));
  for (int s = 0; s < C; ++s) part[0][s] = s;
  return part;
}

int partition_classes(const std::vector<int>& cls) {
  return 1 + *std::max_element(cls.begin(), cls.end());
}

// Contiguous near-equal chunks of the canonically ordered states.
std::vector<int> quantile_split(int C, int k) {
  std::vector<int> cls(C);
  for (int s = 0; s < C; ++s)
    cls[s] = std::min(k - 1, s * k / C);
  return cls;
}

std::vector<std::vector<std::vector<int>>> materialize_hard_z(
    const std::vector<std::vector<int>>& c_all, const Partitions& part) {
  const int q = static_cast<int>(part.size());
  std::vector<std::vector<std::vector<int>>> z(c_all.size());
  for (std::size_t p = 0; p < c_all.size(); ++p) {
    const int S = static_cast<int>(c_all[p].size());
    z[p].assign(q, std::vector<int>(S, -1));
    for (int t = q; t < S; ++t)
      for (int j = 0; j < q; ++j) z[p][j][t] = part[j][c_all[p][t - j - 1]];
  }
  return z;
}

// Exact log marginal of the off-diagonal transition counts with the rows
// integrated out against their Dirichlet prior.
double log_dirmult(const TransitionCounts& counts,
                   std::span<const double> lambda0, double alpha) {
  const int C = counts.C;
  std::size_t rows = counts.num_rows();
  std::size_t tail = rows / static_cast<std::size_t>(counts.k[0]);
  double lg = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    long n_r = counts.n_row[r];
    if (n_r == 0) continue;
    int excl = static_cast<int>(r / tail);
    double a_total = alpha * (1.0 - lambda0[excl]);
    lg += std::lgamma(a_total) - std::lgamma(a_total + static_cast<double>(n_r));
    for (int c = 0; c < C; ++c) {
      long n = counts.n[r * C + c];
      if (n == 0) continue;
      double a = alpha * lambda0[c];
      lg += std::lgamma(a + static_cast<double>(n)) - std::lgamma(a);
    }
  }
  return lg;
}

struct MomentStats {
  long n = 0;
  double sum = 0.0;
  double sumsq = 0.0;
};

struct SeqData {
  LabeledSegmentation seg;
  std::vector<SegmentStats> stats;
};

std::vector<SeqData> build_seq_data(std::span<const Trajectory> trajs,
                                    const std::vector<LabeledSegmentation>& segs) {
  if (trajs.size() != segs.size())
    throw InputError("trajectory and segmentation counts disagree");
  std::vector<SeqData> out(trajs.size());
  for (std::size_t p = 0; p < trajs.size(); ++p) {
    out[p].seg = segs[p];
    out[p].stats = make_segment_stats(trajs[p], segs[p]);
  }
  return out;
}

std::vector<MomentStats> state_moments(const std::vector<SeqData>& data,
                                       const std::vector<std::vector<int>>& c_all,
                                       int C) {
  std::vector<MomentStats> mom(C);
  for (std::size_t p = 0; p < data.size(); ++p) {
    for (std::size_t t = 0; t < c_all[p].size(); ++t) {
      const SegmentStats& s = data[p].stats[t];
      MomentStats& m = mom[c_all[p][t]];
      m.n += s.n;
      m.sum += s.sum;
      m.sumsq += s.sumsq;
    }
  }
  return mom;
}

EmissionParams sample_theta(const std::vector<MomentStats>& mom,
                            const NormalInvGammaPrior& prior, Rng& rng) {
  EmissionParams theta;
  theta.mu.resize(mom.size());
  theta.sigma.resize(mom.size());
  for (std::size_t s = 0; s < mom.size(); ++s) {
    double n = static_cast<double>(mom[s].n);
    double kn = prior.pseudo_obs + n;
    double ybar = n > 0 ? mom[s].sum / n : 0.0;
    double ss = n > 0 ? std::max(0.0, mom[s].sumsq - n * ybar * ybar) : 0.0;
    double mn = (prior.pseudo_obs * prior.mean + n * ybar) / kn;
    double an = prior.shape + 0.5 * n;
    double bn = prior.scale + 0.5 * ss +
                0.5 * prior.pseudo_obs * n * (ybar - prior.mean) *
                    (ybar - prior.mean) / kn;
    std::gamma_distribution<double> g(an, 1.0);
    double var = bn / std::max(g(rng), kLogFloor);
    theta.sigma[s] = std::sqrt(var);
    theta.mu[s] = mn + std::normal_distribution<double>(0.0, 1.0)(rng) *
                           std::sqrt(var / kn);
  }
  return theta;
}

EmissionParams init_theta_from_labels(const std::vector<SeqData>& data,
                                      const std::vector<std::vector<int>>& c_all,
                                      int C, double grand_mean, double grand_var) {
  auto mom = state_moments(data, c_all, C);
  EmissionParams theta;
  theta.mu.resize(C);
  theta.sigma.resize(C);
  double grand_sd = std::sqrt(std::max(grand_var, 1e-12));
  for (int s = 0; s < C; ++s) {
    if (mom[s].n > 0) {
      double n = static_cast<double>(mom[s].n);
      theta.mu[s] = mom[s].sum / n;
      double v = std::max(0.0, mom[s].sumsq / n - theta.mu[s] * theta.mu[s]);
      theta.sigma[s] = std::max(std::sqrt(v), 1e-3 * grand_sd + 1e-9);
    } else {
      theta.mu[s] = grand_mean;
      theta.sigma[s] = grand_sd;
    }
  }
  return theta;
}

// One tempered state pass under hard allocation: every latent class is a
// deterministic function of the lagged states, so downstream rows move with
// the candidate at every lag.
void states_pass_hard(const SeqData& sd, const TransitionTensor& tensor,
                      const Partitions& part, const EmissionParams& theta,
                      std::vector<int>& c, double temperature, Rng& rng) {
  const int q = tensor.order();
  const int C = tensor.C;
  const int S = static_cast<int>(c.size());
  std::vector<int> tuple(q);
  states_pass(
      sd.stats, theta, C, q,
      [&](int t, int s, double& lw) {
        for (int j = 0; j < q; ++j) tuple[j] = part[j][c[t - j - 1]];
        lw += safe_log(tensor.lambda_bar[tensor.row_index(tuple) * C + s]);
        for (int L = 1; L <= q && lw > kNegInf; ++L) {
          int sig = t + L;
          if (sig >= S || sig < q) continue;
          for (int j = 0; j < q; ++j) {
            int src = sig - j - 1;
            tuple[j] = (src == t) ? part[j][s] : part[j][c[src]];
          }
          lw += safe_log(tensor.lambda_bar[tensor.row_index(tuple) * C + c[sig]]);
        }
      },
      [](int) {}, c, temperature, rng);
}

Stage1Result run_stage1(const std::vector<SeqData>& data, int C, int q,
                        const GibbsConfig& config, const Hyperparams& hyper,
                        const NormalInvGammaPrior& prior, double grand_mean,
                        double grand_var, Rng& rng,
                        std::vector<Rng>& seq_rngs) {
  LagSpec k;
  k.k.assign(q, 1);
  k.k[0] = C;
  Partitions part = identity_partitions(C, q);

  std::vector<std::vector<int>> c(data.size());
  for (std::size_t p = 0; p < data.size(); ++p) c[p] = data[p].seg.states;

  TransitionTensor tensor = TransitionTensor::uniform(C, k);
  EmissionParams theta = init_theta_from_labels(data, c, C, grand_mean, grand_var);

  std::vector<std::vector<int>> k_draws;
  k_draws.reserve(config.stage1_iters);
  double temp = config.anneal_init;

  for (int sweep = 0; sweep < config.stage1_iters; ++sweep) {
    if (tensor.k != k.k) tensor = TransitionTensor::uniform(C, k);
    auto z = materialize_hard_z(c, part);
    auto counts = count_transitions(c, z, k, C);
    std::size_t rows = counts.num_rows();
    for (std::size_t r = 0; r < rows; ++r) {
      std::span<const long> row_counts{counts.n.data() + r * C,
                                       static_cast<std::size_t>(C)};
      sample_lambda_row(row_counts, tensor.lambda0, hyper.alpha_conc,
                        tensor.excluded_state(r), tensor.lambda_row(r),
                        tensor.lambda_bar_row(r), rng);
    }
    tensor.lambda0 = sample_lambda0(counts, tensor.lambda0, hyper, rng);

    for (std::size_t p = 0; p < data.size(); ++p)
      states_pass_hard(data[p], tensor, part, theta, c[p], temp, seq_rngs[p]);

    // Latent-class-count moves, one proposal per lag, judged by the exact
    // count marginal times the lag penalty prior.
    if (q > 1) {
      auto cur_counts = count_transitions(c, materialize_hard_z(c, part), k, C);
      double cur_ml = log_dirmult(cur_counts, tensor.lambda0, hyper.alpha_conc);
      for (int j = 1; j < q; ++j) {
        int kj = k.k[j];
        std::vector<int> kinds;
        if (kj < C) kinds.push_back(0);               // split one state off
        if (kj >= 2) kinds.push_back(1);              // merge two classes
        if (kj >= 2 && kj < C) kinds.push_back(2);    // move one state
        int kind = kinds[uniform_int(rng, 0, static_cast<int>(kinds.size()) - 1)];
        std::vector<int> cand = part[j];
        int k_cand = kj;
        if (kind == 0) {
          std::vector<int> sizes(kj, 0);
          for (int s = 0; s < C; ++s) ++sizes[cand[s]];
          std::vector<int> big;
          for (int cl = 0; cl < kj; ++cl)
            if (sizes[cl] >= 2) big.push_back(cl);
          int cl = big[uniform_int(rng, 0, static_cast<int>(big.size()) - 1)];
          std::vector<int> members;
          for (int s = 0; s < C; ++s)
            if (cand[s] == cl) members.push_back(s);
          cand[members[uniform_int(rng, 0, static_cast<int>(members.size()) - 1)]] = kj;
          k_cand = kj + 1;
        } else if (kind == 1) {
          int a = uniform_int(rng, 0, kj - 1);
          int b = uniform_int(rng, 0, kj - 2);
          if (b >= a) ++b;
          if (a > b) std::swap(a, b);
          for (int s = 0; s < C; ++s) {
            if (cand[s] == b) cand[s] = a;
            else if (cand[s] > b) --cand[s];
          }
          k_cand = kj - 1;
        } else {
          std::vector<int> sizes(kj, 0);
          for (int s = 0; s < C; ++s) ++sizes[cand[s]];
          std::vector<int> movable;
          for (int s = 0; s < C; ++s)
            if (sizes[cand[s]] >= 2) movable.push_back(s);
          int s = movable[uniform_int(rng, 0, static_cast<int>(movable.size()) - 1)];
          int target = uniform_int(rng, 0, kj - 2);
          if (target >= cand[s]) ++target;
          cand[s] = target;
        }
        Partitions cand_part = part;
        cand_part[j] = cand;
        LagSpec cand_k = k;
        cand_k.k[j] = k_cand;
        auto cand_counts =
            count_transitions(c, materialize_hard_z(c, cand_part), cand_k, C);
        double cand_ml =
            log_dirmult(cand_counts, tensor.lambda0, hyper.alpha_conc);
        double log_acc = cand_ml - cur_ml -
                         hyper.phi * static_cast<double>(j + 1) *
                             static_cast<double>(k_cand - kj);
        if (log_acc >= 0.0 ||
            std::log(uniform_real(rng, 0.0, 1.0)) < log_acc) {
          part = std::move(cand_part);
          k = cand_k;
          cur_ml = cand_ml;
        }
      }
    }

    theta = sample_theta(state_moments(data, c, C), prior, rng);
    k_draws.push_back(k.k);
    temp = std::max(1.0, temp * config.anneal_decay);
  }

  // Modal class count per lag over the kept sweeps; ties favor fewer classes.
  int first_kept = static_cast<int>(
      std::floor(config.stage1_iters * config.burn_in));
  Stage1Result result;
  result.k.k.assign(q, 1);
  result.k.k[0] = C;
  result.inclusion.assign(q, 0.0);
  result.inclusion[0] = 1.0;
  int kept = config.stage1_iters - first_kept;
  for (int j = 1; j < q; ++j) {
    std::vector<int> freq(C + 1, 0);
    int over_one = 0;
    for (int sweep = first_kept; sweep < config.stage1_iters; ++sweep) {
      ++freq[k_draws[sweep][j]];
      if (k_draws[sweep][j] > 1) ++over_one;
    }
    int best = 1;
    for (int v = 1; v <= C; ++v)
      if (freq[v] > freq[best]) best = v;
    result.k.k[j] = best;
    result.inclusion[j] = static_cast<double>(over_one) / kept;
  }
  result.k_draws = std::move(k_draws);

  // Hand stage 2 partitions consistent with the modal shape.
  result.partitions = std::move(part);
  for (int j = 1; j < q; ++j)
    if (partition_classes(result.partitions[j]) != result.k.k[j])
      result.partitions[j] = quantile_split(C, result.k.k[j]);
  result.tensor = TransitionTensor::uniform(C, result.k);
  result.theta = std::move(theta);
  result.states = std::move(c);
  return result;
}

struct Stage2Run {
  std::vector<Draw> draws;       // kept sweeps when storing
  std::vector<double> logliks;   // every sweep
  std::vector<std::vector<int>> c_final;
};

Stage2Run run_stage2(const std::vector<SeqData>& data, const Stage1Result& seed,
                     int C, const GibbsConfig& config, const Hyperparams& hyper,
                     const NormalInvGammaPrior& prior, bool store_draws,
                     Rng& rng, std::vector<Rng>& seq_rngs) {
  const LagSpec& k = seed.k;
  const int q = k.order();

  std::vector<std::vector<int>> c = seed.states;
  auto z = materialize_hard_z(c, seed.partitions);
  TransitionTensor tensor = TransitionTensor::uniform(C, k);
  AllocationDistributions pi = AllocationDistributions::uniform(C, k);
  EmissionParams theta = seed.theta;

  int first_kept = static_cast<int>(
      std::floor(config.stage2_iters * config.burn_in));
  Stage2Run run;
  run.logliks.reserve(config.stage2_iters);
  if (store_draws) run.draws.reserve(config.stage2_iters - first_kept);
  double temp = config.anneal_init;

  for (int sweep = 0; sweep < config.stage2_iters; ++sweep) {
    // Allocation distributions.
    for (int j = 1; j < q; ++j) {
      const int kj = k.k[j];
      if (kj == 1) continue;
      std::vector<std::vector<long>> n(C, std::vector<long>(kj, 0));
      for (std::size_t p = 0; p < data.size(); ++p) {
        const int S = static_cast<int>(c[p].size());
        for (int t = q; t < S; ++t) ++n[c[p][t - j - 1]][z[p][j][t]];
      }
      for (int w = 0; w < C; ++w) {
        std::vector<double> conc(kj);
        for (int h = 0; h < kj; ++h)
          conc[h] = hyper.gamma[j] + static_cast<double>(n[w][h]);
        pi.pi[j][w] = sample_dirichlet(rng, conc);
      }
    }

    auto counts = count_transitions(c, z, k, C);
    std::size_t rows = counts.num_rows();
    for (std::size_t r = 0; r < rows; ++r) {
      std::span<const long> row_counts{counts.n.data() + r * C,
                                       static_cast<std::size_t>(C)};
      sample_lambda_row(row_counts, tensor.lambda0, hyper.alpha_conc,
                        tensor.excluded_state(r), tensor.lambda_row(r),
                        tensor.lambda_bar_row(r), rng);
    }
    tensor.lambda0 = sample_lambda0(counts, tensor.lambda0, hyper, rng);

    for (std::size_t p = 0; p < data.size(); ++p) {
      sample_allocations_z(c[p], tensor, pi, z[p], seq_rngs[p]);
      sample_states_c(data[p].stats, tensor, pi, theta, z[p], c[p], temp,
                      seq_rngs[p]);
    }

    theta = sample_theta(state_moments(data, c, C), prior, rng);

    double ll = 0.0;
    for (std::size_t p = 0; p < data.size(); ++p)
      for (std::size_t t = 0; t < c[p].size(); ++t)
        ll += segment_loglik(data[p].stats[t], theta, c[p][t]);
    run.logliks.push_back(ll);

    if (store_draws && sweep >= first_kept) {
      Draw d;
      d.tensor = tensor;
      d.pi = pi;
      d.theta = theta;
      d.c = c;
      d.z = z;
      d.loglik = ll;
      run.draws.push_back(std::move(d));
    }
    temp = std::max(1.0, temp * config.anneal_decay);
  }
  run.c_final = std::move(c);
  return run;
}

double stage2_marginal_loglik(const Stage2Run& run, const GibbsConfig& config) {
  int first_kept = static_cast<int>(
      std::floor(config.stage2_iters * config.burn_in));
  std::span<const double> kept{run.logliks.data() + first_kept,
                               run.logliks.size() - first_kept};
  return logsumexp(kept) - std::log(static_cast<double>(kept.size()));
}

std::pair<double, double> grand_moments(std::span<const Trajectory> trajs) {
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  for (const auto& traj : trajs) {
    for (int t = 0; t < traj.length(); ++t) {
      double y = traj.scalar(t);
      sum += y;
      sumsq += y * y;
      ++n;
    }
  }
  double mean = sum / static_cast<double>(n);
  double var = std::max(sumsq / static_cast<double>(n) - mean * mean, 1e-12);
  return {mean, var};
}

Hyperparams fill_gamma(const Hyperparams& hyper, int C, int q) {
  Hyperparams filled = hyper;
  if (filled.gamma.empty())
    filled.gamma.assign(q, 1.0 / static_cast<double>(C));
  else if (static_cast<int>(filled.gamma.size()) == 1)
    filled.gamma.assign(q, filled.gamma[0]);
  else if (static_cast<int>(filled.gamma.size()) != q)
    throw InputError("gamma must hold one entry per lag");
  return filled;
}

struct CorpusSegmentation {
  std::vector<LabeledSegmentation> segs;
  std::vector<std::vector<double>> rule;
};

CorpusSegmentation segment_corpus(std::span<const Trajectory> trajs, int C,
                                  double alpha, Rng& rng) {
  std::vector<std::vector<int>> bounds(trajs.size());
  std::vector<std::vector<double>> pooled;
  for (std::size_t p = 0; p < trajs.size(); ++p) {
    bounds[p] = segment_boundaries(trajs[p], alpha);
    auto centers = segment_centers(trajs[p], bounds[p]);
    pooled.insert(pooled.end(), centers.begin(), centers.end());
  }
  CorpusSegmentation out;
  out.rule = fit_cluster_rule(pooled, C, rng);
  out.segs.resize(trajs.size());
  for (std::size_t p = 0; p < trajs.size(); ++p)
    out.segs[p] = label_and_merge(trajs[p], bounds[p], out.rule);
  return out;
}

}  // namespace

void sample_states_c(std::span<const SegmentStats> stats,
                     const TransitionTensor& tensor,
                     const AllocationDistributions& pi,
                     const EmissionParams& theta,
                     std::vector<std::vector<int>>& z, std::vector<int>& c,
                     double temperature, Rng& rng) {
  const int q = tensor.order();
  const int C = tensor.C;
  const int S = static_cast<int>(c.size());
  std::vector<int> tuple(q);
  states_pass(
      stats, theta, C, q,
      [&](int t, int s, double& lw) {
        for (int j = 0; j < q; ++j) tuple[j] = z[j][t];
        lw += safe_log(tensor.lambda_bar[tensor.row_index(tuple) * C + s]);
        int sig = t + 1;
        if (sig < S && sig >= q && lw > kNegInf) {
          // The next segment's lag-1 class is pinned to the candidate itself.
          tuple[0] = s;
          for (int j = 1; j < q; ++j) tuple[j] = z[j][sig];
          lw += safe_log(tensor.lambda_bar[tensor.row_index(tuple) * C + c[sig]]);
        }
        for (int L = 2; L <= q && lw > kNegInf; ++L) {
          sig = t + L;
          if (sig >= S || sig < q) continue;
          if (tensor.k[L - 1] == 1) continue;
          lw += safe_log(pi.pi[L - 1][s][z[L - 1][sig]]);
        }
      },
      [&](int t) {
        if (t + 1 >= q && t + 1 < S) z[0][t + 1] = c[t];
      },
      c, temperature, rng);
}

NormalInvGammaPrior NormalInvGammaPrior::empirical(double grand_mean,
                                                   double grand_var) {
  NormalInvGammaPrior prior;
  prior.mean = grand_mean;
  prior.pseudo_obs = 1.0;
  prior.shape = 1.0;
  prior.scale = std::max(grand_var, 1e-12);
  return prior;
}

EmissionParams sample_emission_params(
    const std::vector<std::vector<double>>& obs_by_state,
    const NormalInvGammaPrior& prior, Rng& rng) {
  std::vector<MomentStats> mom(obs_by_state.size());
  for (std::size_t s = 0; s < obs_by_state.size(); ++s) {
    for (double y : obs_by_state[s]) {
      mom[s].n += 1;
      mom[s].sum += y;
      mom[s].sumsq += y * y;
    }
  }
  return sample_theta(mom, prior, rng);
}

DurationParams duration_mle(
    const std::vector<LabeledSegmentation>& segmentations, int num_states) {
  std::vector<long> count(num_states, 0);
  std::vector<double> total(num_states, 0.0);
  for (const auto& seg : segmentations) {
    for (int i = 0; i < seg.num_segments(); ++i) {
      count[seg.states[i]] += 1;
      total[seg.states[i]] += seg.durations[i];
    }
  }
  std::string missing;
  for (int s = 0; s < num_states; ++s) {
    if (count[s] == 0)
      missing += (missing.empty() ? "" : ", ") + std::to_string(s + 1);
  }
  if (!missing.empty())
    throw InputError("duration estimation impossible: state(s) " + missing +
                     " never appear in the segmentations");
  DurationParams params;
  params.xi.resize(num_states);
  for (int s = 0; s < num_states; ++s)
    params.xi[s] = total[s] / static_cast<double>(count[s]);
  return params;
}

Stage1Result stage1_determine_k(std::span<const Trajectory> trajectories,
                                const std::vector<LabeledSegmentation>& segs,
                                int num_states, int max_order,
                                const GibbsConfig& config, Rng& rng) {
  config.validate();
  auto data = build_seq_data(trajectories, segs);
  auto [gm, gv] = grand_moments(trajectories);
  auto prior = NormalInvGammaPrior::empirical(gm, gv);
  auto hyper = fill_gamma(config.hyper, num_states, max_order);
  std::uint64_t base = rng();
  std::vector<Rng> seq_rngs;
  for (std::size_t p = 0; p < trajectories.size(); ++p)
    seq_rngs.push_back(derive_rng(base, p));
  return run_stage1(data, num_states, max_order, config, hyper, prior, gm, gv,
                    rng, seq_rngs);
}

double marginal_likelihood_estimate(const PosteriorDraws& draws,
                                    std::span<const Trajectory> trajectories) {
  if (draws.draws.empty()) throw InputError("no stored draws");
  if (draws.final_segmentations.size() != trajectories.size())
    throw InputError("segmentation and trajectory counts disagree");
  std::vector<std::vector<SegmentStats>> stats(trajectories.size());
  for (std::size_t p = 0; p < trajectories.size(); ++p)
    stats[p] = make_segment_stats(trajectories[p], draws.final_segmentations[p]);
  std::vector<double> lls;
  lls.reserve(draws.draws.size());
  for (const Draw& d : draws.draws) {
    double ll = 0.0;
    for (std::size_t p = 0; p < trajectories.size(); ++p)
      for (std::size_t t = 0; t < d.c[p].size(); ++t)
        ll += segment_loglik(stats[p][t], d.theta, d.c[p][t]);
    lls.push_back(ll);
  }
  return logsumexp(lls) - std::log(static_cast<double>(lls.size()));
}

AlphaUpdate mh_update_alpha(double alpha_cur, double loglik_cur,
                            double alpha_prop, double loglik_prop, Rng& rng) {
  AlphaUpdate out;
  double log_acc = loglik_prop - loglik_cur;
  bool accept = log_acc >= 0.0 ||
                std::log(uniform_real(rng, 0.0, 1.0)) < log_acc;
  if (accept) {
    out.alpha = alpha_prop;
    out.loglik = loglik_prop;
    out.accepted = true;
  } else {
    out.alpha = alpha_cur;
    out.loglik = loglik_cur;
    out.accepted = false;
  }
  return out;
}

FitResult fit(std::span<const Trajectory> trajectories, const ModelSpec& spec,
              const GibbsConfig& config, Rng& rng) {
  spec.validate();
  config.validate();
  if (trajectories.empty()) throw InputError("no trajectories to fit");
  const int C = spec.num_states;
  const int q = spec.max_order;
  for (const auto& traj : trajectories) {
    traj.validate();
    if (traj.dim() != 1)
      throw InputError("fit requires univariate trajectories; fuse features first");
    if (traj.length() < q + 2)
      throw InputError("trajectory '" + traj.unit_id +
                       "' shorter than max_order + 2");
  }

  JumpSupport support = jump_support(trajectories);
  auto [gm, gv] = grand_moments(trajectories);
  auto prior = NormalInvGammaPrior::empirical(gm, gv);
  auto hyper = fill_gamma(config.hyper, C, q);

  std::uint64_t base = rng();
  std::vector<Rng> seq_rngs;
  for (std::size_t p = 0; p < trajectories.size(); ++p)
    seq_rngs.push_back(derive_rng(base, p));

  PosteriorDraws out;
  out.support = support;

  double cur_alpha = support.alpha_min;
  double cur_logl = -1e10;
  for (int v = 0; v < config.outer_iters; ++v) {
    double alpha_v = uniform_real(rng, support.alpha_min, support.alpha_max);
    auto corpus = segment_corpus(trajectories, C, alpha_v, rng);
    auto data = build_seq_data(trajectories, corpus.segs);
    auto s1 = run_stage1(data, C, q, config, hyper, prior, gm, gv, rng, seq_rngs);
    auto s2 = run_stage2(data, s1, C, config, hyper, prior, false, rng, seq_rngs);
    double logl_v = stage2_marginal_loglik(s2, config);
    if (!std::isfinite(logl_v))
      throw NumericError("non-finite likelihood at jump threshold " +
                         std::to_string(alpha_v));
    auto upd = mh_update_alpha(cur_alpha, cur_logl, alpha_v, logl_v, rng);
    cur_alpha = upd.alpha;
    cur_logl = upd.loglik;
    out.alpha_chain.push_back(cur_alpha);
    out.alpha_accepted.push_back(upd.accepted ? 1 : 0);
    out.outer_loglik.push_back(logl_v);
  }

  int first_kept = static_cast<int>(
      std::floor(config.outer_iters * config.burn_in));
  double alpha_star = 0.0;
  for (int v = first_kept; v < config.outer_iters; ++v)
    alpha_star += out.alpha_chain[v];
  alpha_star /= static_cast<double>(config.outer_iters - first_kept);
  out.alpha_star = alpha_star;

  // Freeze the threshold and refit; these draws are the ones kept.
  auto corpus = segment_corpus(trajectories, C, alpha_star, rng);
  auto data = build_seq_data(trajectories, corpus.segs);
  auto s1 = run_stage1(data, C, q, config, hyper, prior, gm, gv, rng, seq_rngs);
  auto s2 = run_stage2(data, s1, C, config, hyper, prior, true, rng, seq_rngs);
  if (s2.draws.empty()) throw NumericError("no draws survived burn-in");

  out.k = s1.k;
  out.inclusion = s1.inclusion;
  out.draws = std::move(s2.draws);
  out.final_segmentations = corpus.segs;

  // Per-segment modal states over the stored draws.
  out.decoded_train.resize(trajectories.size());
  std::vector<int> samples(out.draws.size());
  for (std::size_t p = 0; p < trajectories.size(); ++p) {
    const int S = out.final_segmentations[p].num_segments();
    out.decoded_train[p].resize(S);
    for (int t = 0; t < S; ++t) {
      for (std::size_t d = 0; d < out.draws.size(); ++d)
        samples[d] = out.draws[d].c[p][t];
      out.decoded_train[p][t] = mode_per_segment(samples);
    }
    out.final_segmentations[p].states = out.decoded_train[p];
  }

  HohsmmModel model;
  model.spec = spec;
  model.lags = s1.k;
  model.alpha_star = alpha_star;
  model.jump_support = support;
  model.cluster_rule = corpus.rule;

  // Point parameters: posterior means. The transition rows are averaged in
  // their excluded (zero-diagonal) image, the only form the likelihood and
  // every downstream consumer read; the working rows adopt the same matrix,
  // matching the canonical serialized layout.
  const std::size_t n_draws = out.draws.size();
  TransitionTensor mean_tensor = TransitionTensor::uniform(C, s1.k);
  std::fill(mean_tensor.lambda.begin(), mean_tensor.lambda.end(), 0.0);
  std::fill(mean_tensor.lambda0.begin(), mean_tensor.lambda0.end(), 0.0);
  AllocationDistributions mean_pi = AllocationDistributions::uniform(C, s1.k);
  for (int j = 1; j < s1.k.order(); ++j)
    for (int w = 0; w < C; ++w)
      std::fill(mean_pi.pi[j][w].begin(), mean_pi.pi[j][w].end(), 0.0);
  EmissionParams mean_theta;
  mean_theta.mu.assign(C, 0.0);
  mean_theta.sigma.assign(C, 0.0);
  for (const Draw& d : out.draws) {
    for (std::size_t i = 0; i < mean_tensor.lambda.size(); ++i)
      mean_tensor.lambda[i] += d.tensor.lambda_bar[i];
    for (int s = 0; s < C; ++s) mean_tensor.lambda0[s] += d.tensor.lambda0[s];
    for (int j = 1; j < s1.k.order(); ++j)
      for (int w = 0; w < C; ++w)
        for (int h = 0; h < s1.k.k[j]; ++h)
          mean_pi.pi[j][w][h] += d.pi.pi[j][w][h];
    for (int s = 0; s < C; ++s) {
      mean_theta.mu[s] += d.theta.mu[s];
      mean_theta.sigma[s] += d.theta.sigma[s];
    }
  }
  for (std::size_t r = 0; r < mean_tensor.num_rows(); ++r) {
    auto row = mean_tensor.lambda_row(r);
    double total = 0.0;
    for (double v : row) total += v;
    for (double& v : row) v /= total;
    row[mean_tensor.excluded_state(r)] = 0.0;
  }
  {
    double total = 0.0;
    for (double v : mean_tensor.lambda0) total += v;
    for (double& v : mean_tensor.lambda0) v /= total;
  }
  mean_tensor.lambda_bar = mean_tensor.lambda;
  for (int j = 1; j < s1.k.order(); ++j) {
    for (int w = 0; w < C; ++w) {
      double total = 0.0;
      for (double v : mean_pi.pi[j][w]) total += v;
      for (double& v : mean_pi.pi[j][w]) v /= total;
    }
  }
  for (int s = 0; s < C; ++s) {
    mean_theta.mu[s] /= static_cast<double>(n_draws);
    mean_theta.sigma[s] /= static_cast<double>(n_draws);
  }

  model.transitions = std::move(mean_tensor);
  model.allocations = std::move(mean_pi);
  model.emissions = std::move(mean_theta);
  model.durations = duration_mle(out.final_segmentations, C);
  model.validate();

  FitResult result;
  result.model = std::move(model);
  result.draws = std::move(out);
  return result;
}

}  // namespace hohsmm
