// l2o: generate objective sets, tune baselines, train the learned optimizer,
// evaluate and summarize.
//
// Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.

#include "l2o/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(int argc, char** argv) {
  l2o::ExperimentConfig cfg;
  std::string family = "logistic";

  CLI::App app{"Learned optimizer workbench"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "INI/TOML file of key = value settings (keys are the long option names)");
  app.allow_config_extras(false);

  app.add_option("--family", family, "logistic | robustreg | neuralnet")->capture_default_str();
  app.add_option("--seed", cfg.master_seed, "Master seed")->capture_default_str();
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", cfg.jobs, "Worker threads")->capture_default_str();
  app.add_option("--horizon", cfg.horizon_eval, "Evaluation (and tuning) horizon")->capture_default_str();
  app.add_option("--train_count", cfg.train_count, "Training instances (0: family default)")->capture_default_str();
  app.add_option("--test_count", cfg.test_count, "Test instances")->capture_default_str();
  app.add_option("--horizon_train", cfg.horizon_train, "GPS trajectory length")->capture_default_str();
  app.add_option("--samples_per_instance", cfg.samples_per_instance, "GPS samples per instance")->capture_default_str();
  app.add_option("--gps_iterations", cfg.gps_iterations)->capture_default_str();
  app.add_option("--gps_epsilon", cfg.gps_epsilon, "KL budget per trajectory")->capture_default_str();
  app.add_option("--gps_initial_variance", cfg.gps_initial_variance)->capture_default_str();
  app.add_option("--gps_dynamics_ridge", cfg.gps_dynamics_ridge)->capture_default_str();
  app.add_option("--gps_entropy_start", cfg.gps_entropy_start)->capture_default_str();
  app.add_option("--gps_entropy_factor", cfg.gps_entropy_factor)->capture_default_str();
  app.add_option("--gps_entropy_cap", cfg.gps_entropy_cap)->capture_default_str();
  app.add_option("--gps_entropy_weight", cfg.gps_entropy_weight, "Controller entropy weight in the LQG step")
      ->capture_default_str();
  app.add_option("--gps_anchor", cfg.gps_anchor, "Trust-region anchor: controller | policy")->capture_default_str();
  app.add_option("--gps_learning_rate", cfg.gps_learning_rate)->capture_default_str();
  app.add_option("--gps_epochs", cfg.gps_epochs)->capture_default_str();
  app.add_option("--policy_hidden", cfg.policy_hidden)->capture_default_str();
  app.add_option("--history", cfg.history)->capture_default_str();
  app.add_flag("--include_current_gradient", cfg.include_current_gradient, "Append the current gradient to features");
  app.add_option("--step_sizes", cfg.step_sizes, "Baseline step-size grid")->delimiter(',');
  app.add_option("--momentum_decays", cfg.momentum_decays, "Momentum decay grid")->delimiter(',');
  app.add_option("--lbfgs_memory", cfg.lbfgs_memory)->capture_default_str();

  bool resume = false;
  int stop_after = 0;
  auto* generate = app.add_subcommand("generate", "Write train and test instance files");
  auto* tune = app.add_subcommand("tune", "Grid-search each baseline on the training set");
  auto* train = app.add_subcommand("train", "Run guided policy search");
  train->add_flag("--resume", resume, "Continue from train/gps_state.json if present");
  train->add_option("--stop_after", stop_after, "Pause after this many completed iterations");
  auto* eval = app.add_subcommand("eval", "Evaluate policy and baselines on the test set");
  auto* report = app.add_subcommand("report", "Print a summary of the evaluation report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cfg.family = l2o::family_from_string(family);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (generate->parsed()) {
      l2o::cmd_generate(cfg);
    } else if (tune->parsed()) {
      l2o::cmd_tune(cfg);
    } else if (train->parsed()) {
      const l2o::GpsState st = l2o::cmd_train(cfg, resume, stop_after);
      std::cerr << "completed " << st.iteration << " of " << cfg.gps_iterations << " GPS iterations\n";
    } else if (eval->parsed()) {
      const l2o::EvalReport rep = l2o::cmd_eval(cfg);
      std::cerr << "evaluated " << rep.instances << " instances, excluded " << rep.excluded.size() << '\n';
    } else if (report->parsed()) {
      std::cout << l2o::cmd_report(cfg);
    }
  } catch (const l2o::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
