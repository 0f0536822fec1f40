#include <string>

#include <CLI11.hpp>

#include "hohsmm/commands.hpp"

int main(int argc, char** argv) {
  hohsmm::RunConfig cfg;

  // The config file loads first; explicit flags then overwrite its values.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc)
      config_path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0)
      config_path = arg.substr(9);
  }
  if (!config_path.empty()) {
    int rc = hohsmm::run_guarded([&] {
      hohsmm::apply_config_file(cfg, config_path);
      return hohsmm::kExitOk;
    });
    if (rc != hohsmm::kExitOk) return rc;
  }

  CLI::App app{
      "Explicit-duration hidden semi-Markov modeling with higher-order "
      "transition memory, for degradation monitoring and remaining useful "
      "life estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "hohsmm 0.1.0");

  std::string config_dummy;
  app.add_option("--config", config_dummy,
                 "JSON settings file (explicit flags win)");
  app.add_option("--seed", cfg.seed, "master RNG seed");
  app.add_option("--threads", cfg.threads, "worker threads for path simulation")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", cfg.out_dir, "directory for output files");

  auto* sim = app.add_subcommand(
      "simulate", "Generate a synthetic corpus with known ground truth");
  sim->fallthrough();
  sim->add_option("--states", cfg.synthetic.num_states,
                  "number of degradation states");
  sim->add_option("--order", cfg.synthetic.order,
                  "true lag order of the generator");
  sim->add_option("--sequences", cfg.synthetic.num_sequences,
                  "number of sequences");
  sim->add_option("--t-min", cfg.synthetic.t_min, "shortest sequence length");
  sim->add_option("--t-max", cfg.synthetic.t_max, "longest sequence length");
  sim->add_option("--mu", cfg.synthetic.mu, "per-state emission means");
  sim->add_option("--sigma", cfg.synthetic.sigma,
                  "per-state emission standard deviations");
  sim->add_option("--xi", cfg.synthetic.xi, "per-state duration intensities");

  auto* train =
      app.add_subcommand("train", "Fit a model to run-to-failure sequences");
  train->fallthrough();
  train->add_option("--data", cfg.data_path, "input CSV");
  train->add_option("--format", cfg.data_format,
                    "input layout: trajectory | sensor");
  train->add_option("--states", cfg.model.num_states,
                    "number of degradation states");
  train->add_option("--max-order", cfg.model.max_order,
                    "largest lag considered");
  train->add_option("--outer-iters", cfg.gibbs.outer_iters,
                    "jump-threshold proposals");
  train->add_option("--stage1-iters", cfg.gibbs.stage1_iters,
                    "sweeps of the lag-structure search");
  train->add_option("--stage2-iters", cfg.gibbs.stage2_iters,
                    "sweeps with the lag structure fixed");
  train->add_option("--burn-in", cfg.gibbs.burn_in,
                    "fraction of sweeps discarded");
  train->add_option("--anneal-init", cfg.gibbs.anneal_init,
                    "initial state-update temperature");
  train->add_option("--anneal-decay", cfg.gibbs.anneal_decay,
                    "per-sweep temperature multiplier");
  train->add_option("--alpha-conc", cfg.gibbs.hyper.alpha_conc,
                    "row prior concentration");
  train->add_option("--alpha0-conc", cfg.gibbs.hyper.alpha0_conc,
                    "base measure concentration");
  train->add_option("--gamma", cfg.gibbs.hyper.gamma,
                    "allocation prior (one value per lag, or one for all)");
  train->add_option("--phi", cfg.gibbs.hyper.phi,
                    "lag penalty in the class-count prior");
  train->add_option("--failure-window", cfg.failure_window,
                    "trailing decoded segments that vote on the failure state");
  train->add_option("--failure-state", cfg.failure_state_override,
                    "failure state override (1-based)");
  train->add_option("--trace", cfg.trace_path, "trace output path");

  auto add_scoring_options = [&](CLI::App* cmd) {
    cmd->fallthrough();
    cmd->add_option("--model", cfg.model_path, "trained model JSON");
    cmd->add_option("--data", cfg.data_path, "input CSV");
    cmd->add_option("--format", cfg.data_format,
                    "input layout: trajectory | sensor");
    cmd->add_option("--trace", cfg.trace_path,
                    "posterior trace to decode against");
    cmd->add_option("--outer-iters", cfg.gibbs.outer_iters,
                    "jump-threshold proposals");
    cmd->add_option("--stage2-iters", cfg.gibbs.stage2_iters,
                    "state passes of the final decode run");
    cmd->add_option("--burn-in", cfg.gibbs.burn_in,
                    "fraction of iterations discarded");
  };

  auto* dec = app.add_subcommand(
      "decode", "Recover hidden degradation states of new sequences");
  add_scoring_options(dec);

  auto* rul = app.add_subcommand(
      "predict-rul", "Estimate remaining useful life of new sequences");
  add_scoring_options(rul);
  rul->add_option("--failure-state", cfg.failure_state_override,
                  "failure state override (1-based)");
  rul->add_option("--paths", cfg.rul_paths, "simulated paths per unit");
  rul->add_option("--max-steps", cfg.rul_max_steps,
                  "censoring horizon in super-states per path");
  rul->add_flag("--sampled-durations", cfg.rul_sampled_durations,
                "draw durations instead of using their means");

  auto* ev = app.add_subcommand(
      "eval", "Score prefix RUL predictions against run-to-failure truth");
  add_scoring_options(ev);
  ev->add_option("--failure-state", cfg.failure_state_override,
                 "failure state override (1-based)");
  ev->add_option("--paths", cfg.rul_paths, "simulated paths per prefix");
  ev->add_option("--rul-cap", cfg.eval_rul_cap,
                 "cap of the piecewise-linear true RUL");
  ev->add_option("--stride", cfg.eval_stride, "cycles between scored prefixes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? hohsmm::kExitOk : hohsmm::kExitInputError;
  }

  if (*sim) return hohsmm::run_guarded([&] { return cmd_simulate(cfg); });
  if (*train) return hohsmm::run_guarded([&] { return cmd_train(cfg); });
  if (*dec) return hohsmm::run_guarded([&] { return cmd_decode(cfg); });
  if (*rul) return hohsmm::run_guarded([&] { return cmd_predict_rul(cfg); });
  if (*ev) return hohsmm::run_guarded([&] { return cmd_eval(cfg); });
  return hohsmm::kExitInputError;
}
