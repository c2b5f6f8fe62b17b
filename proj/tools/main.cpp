#include "pcbf/config.hpp"
#include "pcbf/errors.hpp"
#include "pcbf/report.hpp"
#include "pcbf/sim.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using namespace pcbf;

std::string default_bundle_path(const std::string& config_path) {
  fs::path p(config_path);
  p.replace_extension(".bundle.toml");
  return p.string();
}

int cmd_synth(const std::string& config_path, std::string out,
              std::string report_path) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  SynthesisOutput synth = synthesize_design(cfg);
  if (out.empty()) out = default_bundle_path(config_path);
  synth.bundle.save(out);
  if (report_path.empty()) {
    fs::path p(out);
    p.replace_extension(".report.txt");
    report_path = p.string();
  }
  write_file_atomic(report_path, synth.report);
  std::cout << "wrote " << out << " and " << report_path << "\n";
  std::cout << synth.report;
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& bundle_path,
            const ScenarioOverrides& overrides, std::string out_dir) {
  const ExperimentConfig cfg = ExperimentConfig::load(config_path);
  const std::string bpath =
      bundle_path.empty() ? default_bundle_path(config_path) : bundle_path;
  if (!fs::exists(bpath))
    throw ConfigError("design bundle not found: " + bpath + " (run `pcbf synth` first)");
  const DesignBundle bundle = DesignBundle::load(bpath);
  const ScenarioConfig scenario = make_scenario(cfg, bundle, overrides);

  const RunLog log = run_closed_loop(scenario);

  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);
  const std::string base = (fs::path(out_dir) / runlog_basename(log)).string();
  write_runlog_csv(log, base + ".csv");
  write_file_atomic(base + ".svg", render_value_chart({log}));
  write_file_atomic(base + "_states.svg", render_state_chart(log, scenario.x_poly));

  std::cout << runlog_basename(log) << ": total_cost=" << format_double(log.summary.total_cost)
            << " steps_to_x=" << log.summary.steps_to_x
            << " steps_to_safe=" << log.summary.steps_to_safe
            << " median_solve_ms=" << format_double(log.summary.median_solve_ms) << "\n";

  if (log.summary.aborted) {
    std::cerr << "run aborted at step " << log.summary.abort_step << ": "
              << log.summary.abort_reason << "\n";
    return 3;
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& log_paths, std::string out_dir) {
  std::vector<RunLog> logs;
  for (const auto& p : log_paths) logs.push_back(read_runlog_csv(p));
  const ComparisonReport report = compare_runs(logs);

  if (out_dir.empty()) out_dir = ".";
  fs::create_directories(out_dir);
  const std::string base =
      (fs::path(out_dir) / (logs.front().scenario + "_comparison")).string();
  write_file_atomic(base + ".csv", report.csv());
  write_file_atomic(base + ".svg", render_value_chart(logs));

  std::cout << report.csv();
  std::cout << "wrote " << base << ".csv and " << base << ".svg\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust predictive control barrier functions: synthesis, closed-loop runs, comparison"};
  app.require_subcommand(1);

  std::string config_path, bundle_path, out, report_path;
  std::string mode, disturbance;
  double c_alpha = -1.0;
  std::int64_t seed = -1;
  int horizon = -1, task_steps = -1;
  std::vector<std::string> log_paths;

  auto* synth = app.add_subcommand("synth", "synthesise the RPI tube and terminal CBF");
  synth->add_option("config", config_path, "experiment config file")->required();
  synth->add_option("--out", out, "bundle output path");
  synth->add_option("--report", report_path, "synthesis report path");

  auto* run = app.add_subcommand("run", "run one closed-loop scenario");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--bundle", bundle_path, "design bundle (default: <config>.bundle.toml)");
  run->add_option("--mode", mode, "two_step | multiobjective | nominal");
  run->add_option("--c-alpha", c_alpha, "decrease relaxation in [0,1)");
  run->add_option("--seed", seed, "disturbance seed");
  run->add_option("--horizon", horizon, "prediction horizon override");
  run->add_option("--task-steps", task_steps, "task length override");
  run->add_option("--disturbance", disturbance, "uniform | vertices | zero | adversarial_heading");
  run->add_option("--out", out, "output directory");

  auto* compare = app.add_subcommand("compare", "compare run logs (same scenario and seed)");
  compare->add_option("logs", log_paths, "run log CSV files")->required()->expected(-2);
  compare->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, out, report_path);
    if (run->parsed()) {
      ScenarioOverrides overrides;
      if (!mode.empty()) overrides.mode = mode;
      if (c_alpha >= 0.0) overrides.c_alpha = c_alpha;
      if (seed >= 0) overrides.seed = static_cast<std::uint64_t>(seed);
      if (horizon > 0) overrides.horizon = horizon;
      if (task_steps > 0) overrides.task_steps = task_steps;
      if (!disturbance.empty()) overrides.disturbance = disturbance;
      return cmd_run(config_path, bundle_path, overrides, out);
    }
    if (compare->parsed()) return cmd_compare(log_paths, out);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 1;
  } catch (const SynthesisError& err) {
    std::cerr << "synthesis error: " << err.what() << "\n";
    return 2;
  } catch (const InvariantError& err) {
    std::cerr << "invariant violation: " << err.what() << "\n";
    return 3;
  } catch (const SolveError& err) {
    std::cerr << "solver error: " << err.what() << "\n";
    return 3;
  }
  return 0;
}
