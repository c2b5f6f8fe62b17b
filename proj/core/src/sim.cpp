#include "pcbf/sim.hpp"

#include "pcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pcbf {

std::string to_string(DisturbancePolicy p) {
  switch (p) {
    case DisturbancePolicy::uniform: return "uniform";
    case DisturbancePolicy::vertices: return "vertices";
    case DisturbancePolicy::zero: return "zero";
    case DisturbancePolicy::adversarial_heading: return "adversarial_heading";
  }
  return "unknown";
}

DisturbancePolicy disturbance_policy_from_string(const std::string& s) {
  if (s == "uniform") return DisturbancePolicy::uniform;
  if (s == "vertices") return DisturbancePolicy::vertices;
  if (s == "zero") return DisturbancePolicy::zero;
  if (s == "adversarial_heading" || s == "adversarial-heading")
    return DisturbancePolicy::adversarial_heading;
  throw ConfigError("unknown disturbance policy '" + s + "'");
}

Vec sample_disturbance(DisturbancePolicy policy, const DisturbanceBox& box, Rng& rng,
                       const Vec* state, int heading_index) {
  const int n = box.dim();
  Vec w = Vec::Zero(n);
  switch (policy) {
    case DisturbancePolicy::zero:
      return w;
    case DisturbancePolicy::uniform:
      for (int i = 0; i < n; ++i) w[i] = rng.uniform(box.lower[i], box.upper[i]);
      return w;
    case DisturbancePolicy::vertices:
      for (int i = 0; i < n; ++i) w[i] = rng.uniform() < 0.5 ? box.lower[i] : box.upper[i];
      return w;
    case DisturbancePolicy::adversarial_heading: {
      if (state == nullptr) throw UsageError("adversarial policy needs the state");
      const double err = (*state)[heading_index];
      w[heading_index] = err >= 0.0 ? box.upper[heading_index] : box.lower[heading_index];
      return w;
    }
  }
  return w;
}

RunSummary summarize(const std::vector<StepRecord>& records, const Polytope& x_poly) {
  RunSummary s;
  std::vector<double> times;
  times.reserve(records.size());
  for (const auto& rec : records) {
    s.total_cost += rec.cost_step;
    times.push_back(rec.solve_ms);
    if (s.steps_to_x < 0 && x_poly.contains(rec.x, 1e-9)) s.steps_to_x = rec.k;
    if (s.steps_to_safe < 0 && rec.value <= 1e-4) s.steps_to_safe = rec.k;
    if (s.steps_to_x >= 0 && rec.k > s.steps_to_x) {
      s.max_violation_after_entry =
          std::max(s.max_violation_after_entry, x_poly.residual(rec.x).maxCoeff());
    }
  }
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    s.median_solve_ms = times[times.size() / 2];
    s.p95_solve_ms = times[static_cast<size_t>(0.95 * (times.size() - 1))];
  }
  return s;
}

RunLog run_closed_loop(const ScenarioConfig& cfg) {
  if (cfg.task_steps < 1) throw UsageError("run_closed_loop: task_steps must be >= 1");

  PcbfProblemSpec spec = make_problem_spec(cfg.model, cfg.horizon, cfg.x_poly, cfg.u_poly,
                                           cfg.tube, cfg.cbf, cfg.pad, cfg.alpha_f);
  Controller controller(std::move(spec), cfg.mode, cfg.c_alpha, cfg.objective);

  const bool filter_obj = cfg.objective.kind == ObjectiveSpec::Kind::filter;
  const bool have_driver = filter_obj && cfg.k_h.size() > 0;

  RunLog log;
  log.scenario = cfg.name;
  log.mode = to_string(cfg.mode);
  log.c_alpha = cfg.c_alpha;
  log.seed = cfg.seed;
  log.n_x = cfg.model.n_x;
  log.n_u = cfg.model.n_u;
  log.n_p = have_driver ? cfg.model.n_u : 0;
  log.n_w = cfg.model.n_x;

  Rng rng(cfg.seed);
  Vec x = cfg.x0;

  if (cfg.mode == ControllerMode::multiobjective) controller.init_multiobjective(x);

  for (int k = 0; k < cfg.task_steps; ++k) {
    StepRecord rec;
    rec.k = k;
    rec.x = x;
    rec.p = have_driver ? Vec(cfg.k_h * x) : Vec();
    try {
      auto [u, diag] = controller.step(x, rec.p);
      rec.u = u;
      rec.value = diag.value;
      rec.bound = diag.bound;
      rec.dh = diag.decrease;
      rec.solve_ms = diag.solve_ms;
      rec.cost_step = filter_obj && rec.p.size() > 0
                          ? (u - rec.p).cwiseAbs().sum()
                          : u.cwiseAbs().sum();
    } catch (const std::runtime_error& err) {
      rec.feasible = false;
      rec.u = Vec::Zero(cfg.model.n_u);
      rec.w = Vec::Zero(cfg.model.n_x);
      log.records.push_back(std::move(rec));
      log.summary = summarize(log.records, cfg.x_poly);
      log.summary.aborted = true;
      log.summary.abort_step = k;
      log.summary.abort_reason = err.what();
      return log;
    }
    rec.w = sample_disturbance(cfg.policy, cfg.w_box, rng, &x, cfg.heading_index);
    x = cfg.model.step(x, rec.u, rec.w);
    log.records.push_back(std::move(rec));
  }
  log.summary = summarize(log.records, cfg.x_poly);
  return log;
}

namespace {

void append_vec(std::ostringstream& ss, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) ss << "," << format_double(v[i]);
}

}  // namespace

std::string runlog_csv(const RunLog& log) {
  std::ostringstream ss;
  ss << "# scenario=" << log.scenario << " mode=" << log.mode
     << " c_alpha=" << format_double(log.c_alpha) << " seed=" << log.seed
     << " n_x=" << log.n_x << " n_u=" << log.n_u << " n_p=" << log.n_p
     << " n_w=" << log.n_w << "\n";
  ss << "k";
  for (int i = 0; i < log.n_x; ++i) ss << ",x" << i;
  for (int i = 0; i < log.n_u; ++i) ss << ",u" << i;
  for (int i = 0; i < log.n_p; ++i) ss << ",p" << i;
  for (int i = 0; i < log.n_w; ++i) ss << ",w" << i;
  ss << ",h,bound,dh,cost_step,solve_ms,feasible\n";
  for (const auto& rec : log.records) {
    ss << rec.k;
    append_vec(ss, rec.x);
    append_vec(ss, rec.u.size() > 0 ? rec.u : Vec(Vec::Zero(log.n_u)));
    if (log.n_p > 0) append_vec(ss, rec.p.size() > 0 ? rec.p : Vec(Vec::Zero(log.n_p)));
    append_vec(ss, rec.w.size() > 0 ? rec.w : Vec(Vec::Zero(log.n_w)));
    ss << "," << format_double(rec.value) << "," << format_double(rec.bound) << ","
       << format_double(rec.dh) << "," << format_double(rec.cost_step) << ","
       << format_double(rec.solve_ms) << "," << (rec.feasible ? 1 : 0) << "\n";
  }
  return ss.str();
}

std::string runlog_basename(const RunLog& log) {
  return log.scenario + "_" + log.mode + "_" + std::to_string(log.seed);
}

void write_runlog_csv(const RunLog& log, const std::string& path) {
  write_file_atomic(path, runlog_csv(log));
}

RunLog read_runlog_csv(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  RunLog log;

  if (!std::getline(in, line) || line.rfind("# scenario=", 0) != 0)
    throw UsageError("not a run log: " + path);
  {
    std::istringstream meta(line.substr(2));
    std::string tok;
    while (meta >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "scenario") log.scenario = val;
      else if (key == "mode") log.mode = val;
      else if (key == "c_alpha") log.c_alpha = std::stod(val);
      else if (key == "seed") log.seed = std::stoull(val);
      else if (key == "n_x") log.n_x = std::stoi(val);
      else if (key == "n_u") log.n_u = std::stoi(val);
      else if (key == "n_p") log.n_p = std::stoi(val);
      else if (key == "n_w") log.n_w = std::stoi(val);
    }
  }
  std::getline(in, line);  // header row

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
    const size_t expected =
        1 + static_cast<size_t>(log.n_x + log.n_u + log.n_p + log.n_w) + 6;
    if (cells.size() != expected)
      throw UsageError("malformed run log row in " + path);
    StepRecord rec;
    size_t at = 0;
    rec.k = static_cast<int>(cells[at++]);
    rec.x = Vec(log.n_x);
    for (int i = 0; i < log.n_x; ++i) rec.x[i] = cells[at++];
    rec.u = Vec(log.n_u);
    for (int i = 0; i < log.n_u; ++i) rec.u[i] = cells[at++];
    rec.p = Vec(log.n_p);
    for (int i = 0; i < log.n_p; ++i) rec.p[i] = cells[at++];
    rec.w = Vec(log.n_w);
    for (int i = 0; i < log.n_w; ++i) rec.w[i] = cells[at++];
    rec.value = cells[at++];
    rec.bound = cells[at++];
    rec.dh = cells[at++];
    rec.cost_step = cells[at++];
    rec.solve_ms = cells[at++];
    rec.feasible = cells[at++] != 0.0;
    log.records.push_back(std::move(rec));
  }
  return log;
}

std::string ComparisonReport::csv() const {
  std::ostringstream ss;
  ss << "label,total_cost,reduction_pct,mean_solve_ms,median_solve_ms,max_solve_ms,steps_to_x\n";
  for (const auto& row : rows) {
    ss << row.label << "," << format_double(row.total_cost) << ","
       << format_double(row.reduction_pct) << "," << format_double(row.mean_solve_ms) << ","
       << format_double(row.median_solve_ms) << "," << format_double(row.max_solve_ms) << ","
       << row.steps_to_x << "\n";
  }
  return ss.str();
}

ComparisonReport compare_runs(const std::vector<RunLog>& logs) {
  if (logs.size() < 2) throw UsageError("compare_runs: need at least two logs");
  for (const auto& log : logs) {
    if (log.seed != logs.front().seed)
      throw UsageError("compare_runs: seed mismatch between logs");
    if (log.scenario != logs.front().scenario)
      throw UsageError("compare_runs: scenario mismatch between logs");
  }

  ComparisonReport rep;
  const double base_cost =
      logs.front().records.empty() ? 0.0 : [&] {
        double c = 0.0;
        for (const auto& r : logs.front().records) c += r.cost_step;
        return c;
      }();
  for (const auto& log : logs) {
    ComparisonRow row;
    row.label = log.mode + "(c=" + format_double(log.c_alpha) + ")";
    std::vector<double> times;
    for (const auto& rec : log.records) {
      row.total_cost += rec.cost_step;
      times.push_back(rec.solve_ms);
      row.max_solve_ms = std::max(row.max_solve_ms, rec.solve_ms);
    }
    if (!times.empty()) {
      row.mean_solve_ms =
          std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
      std::sort(times.begin(), times.end());
      row.median_solve_ms = times[times.size() / 2];
    }
    row.reduction_pct =
        base_cost > 0.0 ? 100.0 * (base_cost - row.total_cost) / base_cost : 0.0;
    // steps_to_x is recomputable only with the polytope; carry the recorded
    // value when the log came straight from run_closed_loop.
    row.steps_to_x = log.summary.steps_to_x;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace pcbf
