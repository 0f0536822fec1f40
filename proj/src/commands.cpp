#include "hohsmm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "hohsmm/decoder.hpp"
#include "hohsmm/json_io.hpp"
#include "hohsmm/rul.hpp"

using nlohmann::json;

namespace hohsmm {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InputError(message);
}

void ensure_out_dir(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
}

std::string out_path(const RunConfig& config, const std::string& name) {
  return (std::filesystem::path(config.out_dir) / name).string();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string fmt_vec(const std::vector<double>& v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out + ")";
}

struct LoadedModel {
  HohsmmModel model;
  std::optional<PcaRule> pca;
};

LoadedModel load_model_file(const std::string& path) {
  require(!path.empty(), "no model file given (--model)");
  json j = load_json_file(path);
  LoadedModel out;
  out.model = model_from_json(j);
  if (j.contains("pca_rule") && !j.at("pca_rule").is_null())
    out.pca = pca_rule_from_json(j.at("pca_rule"));
  return out;
}

// Training-side input: sensor corpora get their fusion rule fitted here.
std::pair<std::vector<Trajectory>, std::optional<PcaRule>> load_training_input(
    const RunConfig& config) {
  require(!config.data_path.empty(), "no input data given (--data)");
  if (config.data_format == "trajectory")
    return {load_trajectories_csv(config.data_path), std::nullopt};
  if (config.data_format == "sensor") {
    SensorTable table = load_sensor_csv(config.data_path);
    PcaRule rule = fit_pca(table);
    return {fpc_transform(rule, table), rule};
  }
  throw InputError("unknown data format '" + config.data_format +
                   "' (expected 'trajectory' or 'sensor')");
}

// Decode-side input: sensor corpora reuse the rule stored with the model.
std::vector<Trajectory> load_scoring_input(const RunConfig& config,
                                           const std::optional<PcaRule>& pca) {
  require(!config.data_path.empty(), "no input data given (--data)");
  if (config.data_format == "trajectory")
    return load_trajectories_csv(config.data_path);
  if (config.data_format == "sensor") {
    require(pca.has_value(),
            "the model holds no fusion rule; it was not trained on sensor data");
    return fpc_transform(*pca, load_sensor_csv(config.data_path));
  }
  throw InputError("unknown data format '" + config.data_format +
                   "' (expected 'trajectory' or 'sensor')");
}

PosteriorDraws load_trace_or_empty(const RunConfig& config) {
  if (config.trace_path.empty()) return {};
  return load_trace(config.trace_path);
}

int resolve_failure_state(const RunConfig& config, const HohsmmModel& model) {
  if (config.failure_state_override) {
    int fs = *config.failure_state_override;
    require(fs >= 1 && fs <= model.spec.num_states,
            "--failure-state outside 1.." +
                std::to_string(model.spec.num_states));
    return fs - 1;
  }
  require(model.failure_state.has_value(),
          "the model stores no failure state; pass --failure-state");
  return *model.failure_state;
}

template <typename T>
void overlay(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> known,
                const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) {
          return key == k;
        }) == known.end())
      throw InputError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace

void apply_config_file(RunConfig& config, const std::string& path) {
  json j = load_json_file(path);
  try {
    check_keys(j,
               {"seed", "threads", "out_dir", "data", "model", "gibbs",
                "synthetic", "failure", "rul", "eval"},
               "'" + path + "'");
    overlay(j, "seed", config.seed);
    overlay(j, "threads", config.threads);
    overlay(j, "out_dir", config.out_dir);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, {"path", "format", "trace"}, "data");
      overlay(d, "path", config.data_path);
      overlay(d, "format", config.data_format);
      overlay(d, "trace", config.trace_path);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, {"num_states", "max_order", "path"}, "model");
      overlay(m, "num_states", config.model.num_states);
      overlay(m, "max_order", config.model.max_order);
      overlay(m, "path", config.model_path);
    }
    if (j.contains("gibbs")) {
      const auto& g = j.at("gibbs");
      check_keys(g,
                 {"outer_iters", "stage1_iters", "stage2_iters", "burn_in",
                  "anneal_init", "anneal_decay", "hyper"},
                 "gibbs");
      overlay(g, "outer_iters", config.gibbs.outer_iters);
      overlay(g, "stage1_iters", config.gibbs.stage1_iters);
      overlay(g, "stage2_iters", config.gibbs.stage2_iters);
      overlay(g, "burn_in", config.gibbs.burn_in);
      overlay(g, "anneal_init", config.gibbs.anneal_init);
      overlay(g, "anneal_decay", config.gibbs.anneal_decay);
      if (g.contains("hyper")) {
        const auto& h = g.at("hyper");
        check_keys(h, {"alpha_conc", "alpha0_conc", "gamma", "phi"}, "hyper");
        overlay(h, "alpha_conc", config.gibbs.hyper.alpha_conc);
        overlay(h, "alpha0_conc", config.gibbs.hyper.alpha0_conc);
        overlay(h, "gamma", config.gibbs.hyper.gamma);
        overlay(h, "phi", config.gibbs.hyper.phi);
      }
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      check_keys(s,
                 {"num_states", "order", "num_sequences", "t_min", "t_max",
                  "mu", "sigma", "xi"},
                 "synthetic");
      overlay(s, "num_states", config.synthetic.num_states);
      overlay(s, "order", config.synthetic.order);
      overlay(s, "num_sequences", config.synthetic.num_sequences);
      overlay(s, "t_min", config.synthetic.t_min);
      overlay(s, "t_max", config.synthetic.t_max);
      overlay(s, "mu", config.synthetic.mu);
      overlay(s, "sigma", config.synthetic.sigma);
      overlay(s, "xi", config.synthetic.xi);
    }
    if (j.contains("failure")) {
      const auto& f = j.at("failure");
      check_keys(f, {"window", "state"}, "failure");
      overlay(f, "window", config.failure_window);
      if (f.contains("state") && !f.at("state").is_null())
        config.failure_state_override = f.at("state").get<int>();
    }
    if (j.contains("rul")) {
      const auto& r = j.at("rul");
      check_keys(r, {"paths", "max_steps", "sampled_durations"}, "rul");
      overlay(r, "paths", config.rul_paths);
      overlay(r, "max_steps", config.rul_max_steps);
      overlay(r, "sampled_durations", config.rul_sampled_durations);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, {"rul_cap", "stride"}, "eval");
      overlay(e, "rul_cap", config.eval_rul_cap);
      overlay(e, "stride", config.eval_stride);
    }
  } catch (const json::exception& e) {
    throw InputError("'" + path + "': " + e.what());
  }
}

int cmd_simulate(const RunConfig& config) {
  ensure_out_dir(config);
  Rng rng = make_rng(config.seed);
  auto [trajs, truth] = generate_synthetic(config.synthetic, rng);

  std::string traj_path = out_path(config, "trajectories.csv");
  write_trajectories_csv(trajs, traj_path);
  std::string truth_path = out_path(config, "ground_truth.json");
  save_json_file(ground_truth_to_json(config.synthetic, truth), truth_path);

  std::cout << "simulated " << trajs.size() << " sequence(s), lengths";
  for (const auto& t : trajs) std::cout << ' ' << t.length();
  std::cout << "\nwrote " << traj_path << "\nwrote " << truth_path << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& config) {
  ensure_out_dir(config);
  auto [trajs, pca] = load_training_input(config);

  ModelSpec spec = config.model;
  spec.random_seed = config.seed;
  Rng rng = make_rng(config.seed);
  FitResult result = fit(trajs, spec, config.gibbs, rng);

  if (config.failure_state_override) {
    int fs = *config.failure_state_override;
    require(fs >= 1 && fs <= spec.num_states,
            "--failure-state outside 1.." + std::to_string(spec.num_states));
    result.model.failure_state = fs - 1;
  } else {
    try {
      result.model.failure_state =
          identify_failure_state(result.draws, config.failure_window);
    } catch (const InputError& e) {
      std::cerr << "warning: failure state not identified: " << e.what()
                << '\n';
    }
  }

  json model_json = model_to_json(result.model);
  if (pca) model_json["pca_rule"] = pca_rule_to_json(*pca);
  std::string model_path = out_path(config, "model.json");
  save_json_file(model_json, model_path);

  std::string trace_path = config.trace_path.empty()
                               ? out_path(config, "trace.ndjson")
                               : config.trace_path;
  save_trace(result.draws, trace_path);

  std::string report_path = out_path(config, "report.json");
  save_json_file(fit_report_to_json(result.draws, result.model), report_path);

  std::cout << "alpha_star " << fmt(result.draws.alpha_star) << " on support ["
            << fmt(result.draws.support.alpha_min) << ", "
            << fmt(result.draws.support.alpha_max) << "]\n";
  for (int lag = 1; lag <= result.model.lags.order(); ++lag)
    std::cout << "lag " << lag << ": k=" << result.model.lags.k[lag - 1]
              << (result.model.lags.important(lag) ? " (important)" : "")
              << " inclusion " << fmt(result.draws.inclusion[lag - 1]) << '\n';
  std::cout << "mu " << fmt_vec(result.model.emissions.mu) << '\n'
            << "sigma " << fmt_vec(result.model.emissions.sigma) << '\n'
            << "xi " << fmt_vec(result.model.durations.xi) << '\n';
  if (result.model.failure_state)
    std::cout << "failure state " << *result.model.failure_state + 1 << '\n';
  std::cout << "wrote " << model_path << "\nwrote " << trace_path
            << "\nwrote " << report_path << '\n';
  return kExitOk;
}

int cmd_decode(const RunConfig& config) {
  ensure_out_dir(config);
  LoadedModel loaded = load_model_file(config.model_path);
  auto trajs = load_scoring_input(config, loaded.pca);
  PosteriorDraws draws = load_trace_or_empty(config);

  Rng rng = make_rng(config.seed);
  json units = json::array();
  for (const auto& traj : trajs) {
    DecodeResult res = decode(loaded.model, draws, traj, config.gibbs, rng);
    json u = decode_result_to_json(res);
    u["unit"] = traj.unit_id;
    units.push_back(std::move(u));
    std::cout << "unit " << traj.unit_id << ": " << res.decoded.size()
              << " segment(s), threshold " << fmt(res.alpha_star_local);
    if (res.adjacent_equal_decoded > 0)
      std::cout << ", " << res.adjacent_equal_decoded
                << " adjacent equal decoded pair(s)";
    std::cout << '\n';
  }
  std::string path = out_path(config, "decode.json");
  save_json_file(json{{"units", std::move(units)}}, path);
  std::cout << "wrote " << path << '\n';
  return kExitOk;
}

int cmd_predict_rul(const RunConfig& config) {
  ensure_out_dir(config);
  LoadedModel loaded = load_model_file(config.model_path);
  auto trajs = load_scoring_input(config, loaded.pca);
  PosteriorDraws draws = load_trace_or_empty(config);
  int failure_state = resolve_failure_state(config, loaded.model);

  Rng rng = make_rng(config.seed);
  json units = json::array();
  for (const auto& traj : trajs) {
    DecodeResult res = decode(loaded.model, draws, traj, config.gibbs, rng);
    RulEstimate est = estimate_rul(
        loaded.model, res.decoded, failure_state, config.rul_paths, rng,
        config.rul_max_steps, config.rul_sampled_durations, config.threads);
    json u = rul_estimate_to_json(est);
    u["unit"] = traj.unit_id;
    json decoded = json::array();
    for (int s : res.decoded) decoded.push_back(s + 1);
    u["decoded"] = std::move(decoded);
    units.push_back(std::move(u));
    std::cout << "unit " << traj.unit_id << ": RUL " << fmt(est.mean_rul)
              << " cycles over " << est.per_path_ruls.size() << " path(s)";
    if (est.num_censored > 0)
      std::cout << " (" << est.num_censored << " censored)";
    std::cout << '\n';
  }
  std::string path = out_path(config, "rul.json");
  save_json_file(json{{"units", std::move(units)},
                      {"failure_state", failure_state + 1}},
                 path);
  std::cout << "wrote " << path << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& config) {
  ensure_out_dir(config);
  require(config.eval_stride >= 1, "--stride must be at least 1");
  LoadedModel loaded = load_model_file(config.model_path);
  auto trajs = load_scoring_input(config, loaded.pca);
  PosteriorDraws draws = load_trace_or_empty(config);
  int failure_state = resolve_failure_state(config, loaded.model);

  Rng rng = make_rng(config.seed);
  std::ostringstream csv;
  csv << "unit,cycle,predicted_rul,true_rul,abs_error\n";
  json units = json::array();
  double total_sq = 0.0, total_abs = 0.0;
  long total_n = 0;
  for (const auto& traj : trajs) {
    const int T = traj.length();
    auto truth = piecewise_true_rul(T, config.eval_rul_cap);
    double unit_sq = 0.0, unit_abs = 0.0;
    long unit_n = 0;
    for (int t = config.eval_stride; t < T; t += config.eval_stride) {
      Trajectory prefix;
      prefix.unit_id = traj.unit_id;
      prefix.values.assign(traj.values.begin(), traj.values.begin() + t);
      DecodeResult res = decode(loaded.model, draws, prefix, config.gibbs, rng);
      RulEstimate est = estimate_rul(
          loaded.model, res.decoded, failure_state, config.rul_paths, rng,
          config.rul_max_steps, config.rul_sampled_durations, config.threads);
      double err = est.mean_rul - truth[t - 1];
      csv << traj.unit_id << ',' << t << ',' << fmt(est.mean_rul) << ','
          << fmt(truth[t - 1]) << ',' << fmt(std::abs(err)) << '\n';
      unit_sq += err * err;
      unit_abs += std::abs(err);
      ++unit_n;
    }
    require(unit_n > 0, "unit '" + traj.unit_id +
                            "' is shorter than the evaluation stride");
    total_sq += unit_sq;
    total_abs += unit_abs;
    total_n += unit_n;
    units.push_back(
        {{"unit", traj.unit_id},
         {"prefixes", unit_n},
         {"rmse", std::sqrt(unit_sq / static_cast<double>(unit_n))},
         {"mae", unit_abs / static_cast<double>(unit_n)}});
    std::cout << "unit " << traj.unit_id << ": rmse "
              << fmt(std::sqrt(unit_sq / static_cast<double>(unit_n)))
              << " mae " << fmt(unit_abs / static_cast<double>(unit_n))
              << " over " << unit_n << " prefix(es)\n";
  }
  double rmse = std::sqrt(total_sq / static_cast<double>(total_n));
  double mae = total_abs / static_cast<double>(total_n);

  std::string csv_path = out_path(config, "metrics.csv");
  atomic_write_file(csv_path, csv.str());
  std::string summary_path = out_path(config, "eval.json");
  save_json_file(json{{"rmse", rmse},
                      {"mae", mae},
                      {"prefixes", total_n},
                      {"rul_cap", config.eval_rul_cap},
                      {"stride", config.eval_stride},
                      {"units", std::move(units)}},
                 summary_path);
  std::cout << "overall rmse " << fmt(rmse) << " mae " << fmt(mae) << " over "
            << total_n << " prefix(es)\nwrote " << csv_path << "\nwrote "
            << summary_path << '\n';
  return kExitOk;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumericError;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumericError;
  }
}

}  // namespace hohsmm
