#include "hohsmm/rul.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hohsmm {

namespace {

// Mode with ties going to the largest state index: under ascending-center
// ordering the larger index is the more degraded candidate.
int mode_ties_largest(std::span<const int> values) {
  std::map<int, int> freq;
  for (int v : values) ++freq[v];
  int best = values[0];
  int best_count = 0;
  for (const auto& [value, count] : freq) {
    if (count >= best_count) {
      best = value;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

int identify_failure_state(const PosteriorDraws& draws, int window) {
  if (window < 1) throw InputError("failure window must be at least 1");
  if (draws.decoded_train.empty())
    throw InputError("no decoded training sequences");
  std::vector<int> per_seq;
  per_seq.reserve(draws.decoded_train.size());
  for (std::size_t p = 0; p < draws.decoded_train.size(); ++p) {
    const auto& dec = draws.decoded_train[p];
    if (static_cast<int>(dec.size()) < window)
      throw InputError("sequence " + std::to_string(p + 1) + " has " +
                       std::to_string(dec.size()) +
                       " segments, fewer than the failure window");
    std::span<const int> tail{dec.data() + dec.size() - window,
                              static_cast<std::size_t>(window)};
    per_seq.push_back(mode_ties_largest(tail));
  }
  return mode_ties_largest(per_seq);
}

PathResult simulate_path(const HohsmmModel& model, std::span<const int> tail,
                         int failure_state, Rng& rng, long max_steps,
                         bool sampled_durations) {
  if (tail.empty()) throw InputError("empty state tail");
  const int q = model.lags.order();
  if (failure_state < 0 || failure_state >= model.spec.num_states)
    throw std::out_of_range("failure state outside the state set");

  PathResult path;
  if (tail.back() == failure_state) return path;  // already failed: zero

  // Oldest-first history of length q; short tails repeat their oldest entry.
  std::vector<int> history(q);
  for (int j = 0; j < q; ++j) {
    long idx = static_cast<long>(tail.size()) - q + j;
    history[j] = tail[static_cast<std::size_t>(std::max(idx, 0L))];
  }

  for (long step = 0; step < max_steps; ++step) {
    int next = sample_next_state(model, history, rng);
    path.states.push_back(next);
    double d = sampled_durations
                   ? static_cast<double>(
                         positive_poisson(rng, model.durations.xi[next]))
                   : duration_mean(model.durations, next);
    path.rul += d;
    if (next == failure_state) return path;
    std::rotate(history.begin(), history.begin() + 1, history.end());
    history.back() = next;
  }
  path.censored = true;
  return path;
}

RulEstimate estimate_rul(const HohsmmModel& model, std::span<const int> tail,
                         int failure_state, int num_paths, Rng& rng,
                         long max_steps, bool sampled_durations, int threads) {
  if (num_paths < 1) throw InputError("num_paths must be at least 1");
  std::uint64_t base = rng();
  std::vector<PathResult> paths(num_paths);
  parallel_for(static_cast<std::size_t>(num_paths), threads,
               [&](std::size_t i) {
                 Rng path_rng = derive_rng(base, i);
                 paths[i] = simulate_path(model, tail, failure_state, path_rng,
                                          max_steps, sampled_durations);
               });

  RulEstimate est;
  est.num_paths = num_paths;
  double total = 0.0;
  for (const PathResult& p : paths) {
    if (p.censored) {
      ++est.num_censored;
      continue;
    }
    est.per_path_ruls.push_back(p.rul);
    est.path_lengths.push_back(static_cast<long>(p.states.size()));
    total += p.rul;
  }
  if (est.per_path_ruls.empty())
    throw NumericError("every simulated path was censored at " +
                       std::to_string(max_steps) +
                       " steps; the failure state looks unreachable");
  est.mean_rul = total / static_cast<double>(est.per_path_ruls.size());
  return est;
}

std::vector<double> piecewise_true_rul(int total_life, int cap) {
  if (total_life < 1) throw InputError("total_life must be at least 1");
  if (cap < 0) throw InputError("cap must be non-negative");
  std::vector<double> rul(total_life);
  for (int t = 1; t <= total_life; ++t)
    rul[t - 1] = std::min(static_cast<double>(cap),
                          static_cast<double>(total_life - t));
  return rul;
}

}  // namespace hohsmm
