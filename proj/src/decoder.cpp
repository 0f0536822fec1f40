#include "hohsmm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hohsmm {

namespace {

struct DrawView {
  const TransitionTensor* tensor;
  const AllocationDistributions* pi;
  const EmissionParams* theta;
};

std::vector<DrawView> draw_views(const HohsmmModel& model,
                                 const PosteriorDraws& draws) {
  std::vector<DrawView> views;
  if (draws.draws.empty()) {
    views.push_back({&model.transitions, &model.allocations, &model.emissions});
  } else {
    views.reserve(draws.draws.size());
    for (const Draw& d : draws.draws)
      views.push_back({&d.tensor, &d.pi, &d.theta});
  }
  return views;
}

struct DecodeChain {
  LabeledSegmentation seg;
  std::vector<SegmentStats> stats;
  std::vector<int> c;
  std::vector<std::vector<int>> z;
};

DecodeChain init_chain(const HohsmmModel& model, const Trajectory& traj,
                       double alpha, Rng& rng) {
  DecodeChain chain;
  auto bounds = segment_boundaries(traj, alpha);
  chain.seg = label_and_merge(traj, bounds, model.cluster_rule);
  chain.stats = make_segment_stats(traj, chain.seg);
  chain.c = chain.seg.states;
  const int q = model.lags.order();
  const int S = chain.seg.num_segments();
  chain.z.assign(q, std::vector<int>(S, -1));
  for (int t = q; t < S; ++t) {
    chain.z[0][t] = chain.c[t - 1];
    for (int j = 1; j < q; ++j) {
      const auto& weights = model.allocations.pi[j][chain.c[t - j - 1]];
      chain.z[j][t] = model.lags.k[j] == 1 ? 0 : sample_categorical(rng, weights);
    }
  }
  return chain;
}

double chain_loglik(const DecodeChain& chain, const EmissionParams& theta) {
  double ll = 0.0;
  for (std::size_t t = 0; t < chain.c.size(); ++t)
    ll += segment_loglik(chain.stats[t], theta, chain.c[t]);
  return ll;
}

void one_pass(DecodeChain& chain, const DrawView& view, Rng& rng) {
  sample_states_c(chain.stats, *view.tensor, *view.pi, *view.theta, chain.z,
                  chain.c, 1.0, rng);
  sample_allocations_z(chain.c, *view.tensor, *view.pi, chain.z, rng);
}

}  // namespace

int mode_per_segment(std::span<const int> samples) {
  if (samples.empty()) throw InputError("no samples to take a mode over");
  std::map<int, int> freq;
  for (int s : samples) ++freq[s];
  int best = samples[0];
  int best_count = 0;
  for (const auto& [value, count] : freq) {
    if (count > best_count) {  // map order makes ties go to the smallest
      best = value;
      best_count = count;
    }
  }
  return best;
}

DecodeResult decode(const HohsmmModel& model, const PosteriorDraws& draws,
                    const Trajectory& traj, const GibbsConfig& config,
                    Rng& rng) {
  model.validate();
  config.validate();
  traj.validate();
  if (traj.dim() != 1)
    throw InputError("decode requires univariate trajectories; fuse features first");
  if (model.cluster_rule.empty())
    throw InputError("model carries no cluster rule");

  auto views = draw_views(model, draws);
  const std::size_t n_views = views.size();

  double cur_alpha = model.jump_support.alpha_min;
  double cur_logl = -1e10;
  std::vector<double> alpha_chain;
  alpha_chain.reserve(config.outer_iters);
  for (int v = 0; v < config.outer_iters; ++v) {
    double alpha_v = uniform_real(rng, model.jump_support.alpha_min,
                                  model.jump_support.alpha_max);
    DecodeChain chain = init_chain(model, traj, alpha_v, rng);
    const DrawView& view = views[static_cast<std::size_t>(v) % n_views];
    one_pass(chain, view, rng);
    double logl_v = chain_loglik(chain, *view.theta);
    auto upd = mh_update_alpha(cur_alpha, cur_logl, alpha_v, logl_v, rng);
    cur_alpha = upd.alpha;
    cur_logl = upd.loglik;
    alpha_chain.push_back(cur_alpha);
  }

  int first_kept = static_cast<int>(
      std::floor(config.outer_iters * config.burn_in));
  double alpha_local = 0.0;
  for (int v = first_kept; v < config.outer_iters; ++v)
    alpha_local += alpha_chain[v];
  alpha_local /= static_cast<double>(config.outer_iters - first_kept);

  DecodeChain chain = init_chain(model, traj, alpha_local, rng);
  const int S = chain.seg.num_segments();
  int final_first_kept = static_cast<int>(
      std::floor(config.stage2_iters * config.burn_in));
  std::vector<std::vector<int>> samples(S);
  for (int pass = 0; pass < config.stage2_iters; ++pass) {
    one_pass(chain, views[static_cast<std::size_t>(pass) % n_views], rng);
    if (pass >= final_first_kept)
      for (int t = 0; t < S; ++t) samples[t].push_back(chain.c[t]);
  }

  DecodeResult result;
  result.alpha_star_local = alpha_local;
  result.state_samples = std::move(samples);
  result.decoded.resize(S);
  for (int t = 0; t < S; ++t)
    result.decoded[t] = mode_per_segment(result.state_samples[t]);
  result.adjacent_equal_decoded = 0;
  for (int t = 1; t < S; ++t)
    if (result.decoded[t] == result.decoded[t - 1])
      ++result.adjacent_equal_decoded;
  result.segmentation = std::move(chain.seg);
  result.segmentation.states = result.decoded;
  return result;
}

}  // namespace hohsmm
