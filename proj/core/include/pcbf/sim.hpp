#pragma once

#include "pcbf/controller.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pcbf {

enum class DisturbancePolicy { uniform, vertices, zero, adversarial_heading };

std::string to_string(DisturbancePolicy p);
DisturbancePolicy disturbance_policy_from_string(const std::string& s);

/// One closed-loop experiment: plant (+ disturbance policy) against one
/// controller configuration. Everything needed for a byte-reproducible run.
struct ScenarioConfig {
  std::string name;
  SystemModel model;
  Polytope x_poly;
  Polytope u_poly;
  DisturbanceBox w_box;
  RpiTube tube;
  TerminalCbf cbf;
  PaddingSchedule pad;
  double alpha_f = 1e6;
  int horizon = 1;          // prediction horizon N
  int task_steps = 1;       // task horizon T
  Vec x0;
  ControllerMode mode = ControllerMode::two_step;
  double c_alpha = 0.0;
  ObjectiveSpec objective;
  DisturbancePolicy policy = DisturbancePolicy::zero;
  std::uint64_t seed = 0;
  Mat k_h;                  // proposed-input gain p_k = K_h x_k (filter studies)
  int heading_index = 1;    // channel the adversarial policy pushes on
};

struct StepRecord {
  int k = 0;
  Vec x;
  Vec u;
  Vec p;
  Vec w;
  double value = 0.0;   // h or h~
  double bound = 0.0;
  double dh = 0.0;
  double cost_step = 0.0;
  double solve_ms = 0.0;
  bool feasible = true;
};

struct RunSummary {
  double total_cost = 0.0;
  int steps_to_x = -1;          // first k with x_k in X
  int steps_to_safe = -1;       // first k with value <= 1e-4
  double max_violation_after_entry = 0.0;
  double median_solve_ms = 0.0;
  double p95_solve_ms = 0.0;
  bool aborted = false;
  int abort_step = -1;
  std::string abort_reason;
};

struct RunLog {
  std::string scenario;
  std::string mode;
  double c_alpha = 0.0;
  std::uint64_t seed = 0;
  int n_x = 0, n_u = 0, n_p = 0, n_w = 0;
  std::vector<StepRecord> records;
  RunSummary summary;
};

/// Draws one disturbance. `state` feeds the adversarial-heading policy, which
/// pushes the heading channel away from zero at full magnitude.
Vec sample_disturbance(DisturbancePolicy policy, const DisturbanceBox& box, Rng& rng,
                       const Vec* state = nullptr, int heading_index = 1);

/// Runs the closed loop for cfg.task_steps. Controller invariant failures
/// abort the run; the log up to the failure is returned with
/// summary.aborted set.
RunLog run_closed_loop(const ScenarioConfig& cfg);

/// Recomputes the summary from the records (used after CSV round-trips).
RunSummary summarize(const std::vector<StepRecord>& records, const Polytope& x_poly);

struct ComparisonRow {
  std::string label;
  double total_cost = 0.0;
  double reduction_pct = 0.0;  // vs the first log
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  int steps_to_x = -1;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::string csv() const;
};

/// Compares runs of the same scenario/seed differing in controller mode or
/// c_alpha. Seed or scenario mismatch is a usage error.
ComparisonReport compare_runs(const std::vector<RunLog>& logs);

// CSV persistence with the fixed column order
// k, x[..], u[..], p[..], w[..], h, bound, dh, cost_step, solve_ms, feasible.
std::string runlog_csv(const RunLog& log);
void write_runlog_csv(const RunLog& log, const std::string& path);
RunLog read_runlog_csv(const std::string& path);
std::string runlog_basename(const RunLog& log);  // <scenario>_<mode>_<seed>

}  // namespace pcbf
