#include "hohsmm/model.hpp"

#include <cassert>
#include <cmath>
#include <numbers>

namespace hohsmm {

namespace {

constexpr double kRowTol = 1e-12;
constexpr double kDegenerate = 1.0 - 1e-12;

void check_state(int s, int C, const char* what) {
  if (s < 0 || s >= C)
    throw std::out_of_range(std::string(what) + " index " + std::to_string(s) +
                            " outside [0, " + std::to_string(C) + ")");
}

void check_simplex(std::span<const double> v, const char* what) {
  double total = 0.0;
  for (double p : v) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw NumericError(std::string(what) + " has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kRowTol)
    throw NumericError(std::string(what) + " does not sum to one (sum = " +
                       std::to_string(total) + ")");
}

}  // namespace

void ModelSpec::validate() const {
  if (num_states < 2) throw InputError("num_states must be at least 2");
  if (max_order < 1) throw InputError("max_order must be at least 1");
}

void LagSpec::validate(int num_states) const {
  if (k.empty()) throw InputError("lag spec is empty");
  if (k[0] != num_states)
    throw InputError("lag-1 class count must equal the number of states");
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (k[j] < 1 || k[j] > num_states)
      throw InputError("lag " + std::to_string(j + 1) +
                       " class count outside [1, C]");
  }
}

TransitionTensor TransitionTensor::uniform(int C, const LagSpec& lags) {
  TransitionTensor t;
  t.C = C;
  t.k = lags.k;
  std::size_t rows = t.num_rows();
  t.lambda.assign(rows * C, 1.0 / C);
  t.lambda0.assign(C, 1.0 / C);
  t.recompute_bar();
  return t;
}

std::size_t TransitionTensor::num_rows() const {
  std::size_t rows = 1;
  for (int kj : k) rows *= static_cast<std::size_t>(kj);
  return rows;
}

std::size_t TransitionTensor::row_index(std::span<const int> tuple) const {
  assert(tuple.size() == k.size());
  std::size_t idx = 0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    assert(tuple[j] >= 0 && tuple[j] < k[j]);
    idx = idx * static_cast<std::size_t>(k[j]) + static_cast<std::size_t>(tuple[j]);
  }
  return idx;
}

int TransitionTensor::excluded_state(std::size_t row) const {
  std::size_t tail = num_rows() / static_cast<std::size_t>(k[0]);
  return static_cast<int>(row / tail);
}

std::span<const double> TransitionTensor::lambda_row(std::size_t row) const {
  return {lambda.data() + row * C, static_cast<std::size_t>(C)};
}

std::span<double> TransitionTensor::lambda_row(std::size_t row) {
  return {lambda.data() + row * C, static_cast<std::size_t>(C)};
}

std::span<const double> TransitionTensor::lambda_bar_row(std::size_t row) const {
  return {lambda_bar.data() + row * C, static_cast<std::size_t>(C)};
}

std::span<double> TransitionTensor::lambda_bar_row(std::size_t row) {
  return {lambda_bar.data() + row * C, static_cast<std::size_t>(C)};
}

void TransitionTensor::recompute_bar() {
  std::size_t rows = num_rows();
  lambda_bar.assign(rows * C, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    int excl = excluded_state(r);
    auto row = lambda_row(r);
    auto bar = exclude_self_transitions(row, excl);
    std::copy(bar.begin(), bar.end(), lambda_bar.begin() + r * C);
  }
}

void TransitionTensor::validate() const {
  if (C < 2) throw InputError("transition tensor needs at least two states");
  if (k.empty() || k[0] != C)
    throw InputError("transition tensor lag-1 class count must equal C");
  std::size_t rows = num_rows();
  if (lambda.size() != rows * C || lambda_bar.size() != rows * C)
    throw InputError("transition tensor storage does not match its shape");
  check_simplex(lambda0, "base measure");
  for (std::size_t r = 0; r < rows; ++r) {
    check_simplex(lambda_row(r), "transition row");
    check_simplex(lambda_bar_row(r), "excluded transition row");
    if (lambda_bar[r * C + excluded_state(r)] != 0.0)
      throw NumericError("self-transition mass survives exclusion");
  }
}

AllocationDistributions AllocationDistributions::uniform(int C,
                                                         const LagSpec& lags) {
  AllocationDistributions a;
  a.pi.resize(lags.k.size());
  for (std::size_t j = 0; j < lags.k.size(); ++j) {
    a.pi[j].assign(C, std::vector<double>(lags.k[j], 1.0 / lags.k[j]));
  }
  // Lag 1 is pinned: state s allocates to class s with certainty.
  for (int s = 0; s < C; ++s) {
    std::fill(a.pi[0][s].begin(), a.pi[0][s].end(), 0.0);
    a.pi[0][s][s] = 1.0;
  }
  return a;
}

void AllocationDistributions::validate(int C, const LagSpec& lags) const {
  if (pi.size() != lags.k.size())
    throw InputError("allocation distributions do not cover every lag");
  for (std::size_t j = 0; j < pi.size(); ++j) {
    if (static_cast<int>(pi[j].size()) != C)
      throw InputError("allocation distributions missing a state row");
    for (int s = 0; s < C; ++s) {
      if (static_cast<int>(pi[j][s].size()) != lags.k[j])
        throw InputError("allocation row length disagrees with the lag spec");
      check_simplex(pi[j][s], "allocation row");
    }
  }
  for (int s = 0; s < C; ++s) {
    for (int h = 0; h < C; ++h) {
      if (pi[0][s][h] != (s == h ? 1.0 : 0.0))
        throw InputError("lag-1 allocation must be one-hot at the state itself");
    }
  }
}

void EmissionParams::validate() const {
  if (mu.size() != sigma.size() || mu.empty())
    throw InputError("emission parameter vectors are inconsistent");
  for (double s : sigma)
    if (!(s > 0.0) || !std::isfinite(s))
      throw InputError("emission scale must be positive and finite");
  for (double m : mu)
    if (!std::isfinite(m)) throw InputError("emission mean must be finite");
}

void DurationParams::validate() const {
  if (xi.empty()) throw InputError("duration parameters are empty");
  for (double x : xi)
    if (!(x > 0.0) || !std::isfinite(x))
      throw InputError("duration intensity must be positive and finite");
}

void Hyperparams::validate() const {
  if (!(alpha_conc > 0.0)) throw InputError("alpha_conc must be positive");
  if (!(alpha0_conc > 0.0)) throw InputError("alpha0_conc must be positive");
  if (!(phi >= 0.0)) throw InputError("phi must be non-negative");
  for (double g : gamma)
    if (!(g > 0.0)) throw InputError("gamma entries must be positive");
}

void HohsmmModel::validate() const {
  spec.validate();
  lags.validate(spec.num_states);
  transitions.validate();
  if (transitions.k != lags.k)
    throw InputError("transition tensor shape disagrees with the lag spec");
  allocations.validate(spec.num_states, lags);
  emissions.validate();
  durations.validate();
  if (static_cast<int>(emissions.mu.size()) != spec.num_states ||
      static_cast<int>(durations.xi.size()) != spec.num_states)
    throw InputError("per-state parameter vectors disagree with num_states");
  if (failure_state)
    check_state(*failure_state, spec.num_states, "failure state");
  if (!cluster_rule.empty()) {
    if (static_cast<int>(cluster_rule.size()) != spec.num_states)
      throw InputError("cluster rule must hold one center per state");
    for (std::size_t i = 1; i < cluster_rule.size(); ++i)
      if (!(cluster_rule[i - 1][0] < cluster_rule[i][0]))
        throw InputError("cluster rule centers must ascend");
  }
}

std::vector<double> exclude_self_transitions(std::span<const double> row,
                                             int excluded) {
  check_state(excluded, static_cast<int>(row.size()), "excluded state");
  if (row[excluded] >= kDegenerate)
    throw NumericError("degenerate transition row: state " +
                       std::to_string(excluded + 1) + " holds all mass");
  std::vector<double> out(row.size());
  double keep = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c)
    if (static_cast<int>(c) != excluded) keep += row[c];
  for (std::size_t c = 0; c < row.size(); ++c)
    out[c] = static_cast<int>(c) == excluded ? 0.0 : row[c] / keep;
  return out;
}

namespace {

// Applies fn(weight, row_index) for every latent tuple consistent with the
// history, weighting by the lag >= 2 allocation probabilities. The lag-1
// class is pinned to the previous state.
template <typename Fn>
void for_each_weighted_row(const HohsmmModel& model,
                           std::span<const int> history, Fn&& fn) {
  const auto& k = model.lags.k;
  const int q = static_cast<int>(k.size());
  std::vector<int> tuple(q);
  tuple[0] = history[q - 1];
  std::vector<int> odo(q, 0);
  for (;;) {
    double w = 1.0;
    for (int j = 1; j < q; ++j) {
      tuple[j] = odo[j];
      w *= model.allocations.pi[j][history[q - 1 - j]][odo[j]];
    }
    if (w > 0.0) fn(w, model.transitions.row_index(tuple));
    int j = q - 1;
    for (; j >= 1; --j) {
      if (++odo[j] < k[j]) break;
      odo[j] = 0;
    }
    if (j < 1) break;
  }
}

void check_history(const HohsmmModel& model, std::span<const int> history) {
  const int q = model.lags.order();
  if (static_cast<int>(history.size()) != q)
    throw InputError("history must hold exactly q states");
  for (int s : history) check_state(s, model.spec.num_states, "history state");
}

}  // namespace

double transition_prob(const HohsmmModel& model, std::span<const int> history,
                       int next) {
  check_history(model, history);
  check_state(next, model.spec.num_states, "next state");
  const int C = model.spec.num_states;
  double total = 0.0;
  for_each_weighted_row(model, history, [&](double w, std::size_t row) {
    total += w * model.transitions.lambda_bar[row * C + next];
  });
  return total;
}

std::vector<double> transition_distribution(const HohsmmModel& model,
                                            std::span<const int> history) {
  check_history(model, history);
  const int C = model.spec.num_states;
  std::vector<double> dist(C, 0.0);
  for_each_weighted_row(model, history, [&](double w, std::size_t row) {
    const double* bar = model.transitions.lambda_bar.data() + row * C;
    for (int c = 0; c < C; ++c) dist[c] += w * bar[c];
  });
  return dist;
}

std::vector<double> r_step_transition(const HohsmmModel& model,
                                      std::span<const int> history, int r) {
  check_history(model, history);
  if (r < 1) throw InputError("step count must be at least 1");
  TransitionTable table(model);
  const int C = model.spec.num_states;
  std::vector<double> dist(table.num_histories(), 0.0);
  dist[table.history_index(history)] = 1.0;
  std::vector<double> next(dist.size());
  for (int step = 0; step < r; ++step) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t h = 0; h < dist.size(); ++h) {
      if (dist[h] == 0.0) continue;
      auto row = table.row(h);
      for (int c = 0; c < C; ++c) {
        if (row[c] == 0.0) continue;
        next[table.shift(h, c)] += dist[h] * row[c];
      }
    }
    dist.swap(next);
  }
  std::vector<double> out(C, 0.0);
  for (std::size_t h = 0; h < dist.size(); ++h)
    out[h % static_cast<std::size_t>(C)] += dist[h];
  return out;
}

double emission_loglik(const EmissionParams& emissions, int state, double y) {
  check_state(state, static_cast<int>(emissions.mu.size()), "state");
  double s = emissions.sigma[state];
  double z = (y - emissions.mu[state]) / s;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(s) - 0.5 * z * z;
}

double duration_logpmf(const DurationParams& durations, int state, long d) {
  check_state(state, static_cast<int>(durations.xi.size()), "state");
  if (d < 1) throw std::domain_error("durations start at 1");
  double xi = durations.xi[state];
  // Poisson conditioned on d >= 1.
  return static_cast<double>(d) * std::log(xi) - xi -
         std::lgamma(static_cast<double>(d) + 1.0) -
         std::log1p(-std::exp(-xi));
}

double duration_mean(const DurationParams& durations, int state) {
  check_state(state, static_cast<int>(durations.xi.size()), "state");
  double xi = durations.xi[state];
  return xi / (1.0 - std::exp(-xi));
}

int sample_next_state(const HohsmmModel& model, std::span<const int> history,
                      Rng& rng) {
  auto dist = transition_distribution(model, history);
  return sample_categorical(rng, dist);
}

TransitionTable::TransitionTable(const HohsmmModel& model)
    : C_(model.spec.num_states), q_(model.lags.order()) {
  std::size_t histories = 1;
  for (int j = 0; j < q_; ++j) {
    histories *= static_cast<std::size_t>(C_);
    if (histories > (1u << 24))
      throw InputError("history space too large to tabulate");
  }
  drop_ = histories / static_cast<std::size_t>(C_);
  rows_.resize(histories * static_cast<std::size_t>(C_));
  std::vector<int> history(q_, 0);
  for (std::size_t h = 0; h < histories; ++h) {
    std::size_t rem = h;
    for (int j = q_ - 1; j >= 0; --j) {
      history[j] = static_cast<int>(rem % static_cast<std::size_t>(C_));
      rem /= static_cast<std::size_t>(C_);
    }
    auto dist = transition_distribution(model, history);
    std::copy(dist.begin(), dist.end(),
              rows_.begin() + h * static_cast<std::size_t>(C_));
  }
}

std::size_t TransitionTable::history_index(std::span<const int> history) const {
  if (static_cast<int>(history.size()) != q_)
    throw InputError("history must hold exactly q states");
  std::size_t idx = 0;
  for (int j = 0; j < q_; ++j) {
    check_state(history[j], C_, "history state");
    idx = idx * static_cast<std::size_t>(C_) + static_cast<std::size_t>(history[j]);
  }
  return idx;
}

std::size_t TransitionTable::shift(std::size_t history, int next) const {
  return (history % drop_) * static_cast<std::size_t>(C_) +
         static_cast<std::size_t>(next);
}

std::span<const double> TransitionTable::row(std::size_t history) const {
  return {rows_.data() + history * static_cast<std::size_t>(C_),
          static_cast<std::size_t>(C_)};
}

}  // namespace hohsmm
