#include "pcbf/config.hpp"

#include "pcbf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace pcbf {

namespace {

constexpr double kDeg = M_PI / 180.0;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// TextDoc
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, TextDoc::Value>>* TextDoc::section(
    const std::string& name, bool create) {
  for (auto& [sec, kvs] : sections_) {
    if (sec == name) return &kvs;
  }
  if (!create) return nullptr;
  sections_.emplace_back(name, std::vector<std::pair<std::string, Value>>{});
  return &sections_.back().second;
}

const std::vector<std::pair<std::string, TextDoc::Value>>* TextDoc::section(
    const std::string& name) const {
  for (const auto& [sec, kvs] : sections_) {
    if (sec == name) return &kvs;
  }
  return nullptr;
}

TextDoc TextDoc::parse(const std::string& content, const std::string& origin) {
  TextDoc doc;
  doc.origin_ = origin;
  std::istringstream in(content);
  std::string line;
  std::string current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      doc.section(current, true);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string raw = trim(line.substr(eq + 1));
    if (key.empty() || raw.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    if (current.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any section");

    Value v;
    v.line = lineno;
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated string");
      v.kind = Value::Kind::string;
      v.str = raw.substr(1, raw.size() - 2);
    } else if (raw == "true" || raw == "false") {
      v.kind = Value::Kind::boolean;
      v.flag = raw == "true";
    } else if (raw.front() == '[') {
      if (raw.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated array");
      v.kind = Value::Kind::array;
      std::string inner = raw.substr(1, raw.size() - 2);
      std::replace(inner.begin(), inner.end(), ',', ' ');
      std::istringstream as(inner);
      double d = 0.0;
      while (as >> d) v.arr.push_back(d);
      if (!as.eof())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad array element");
    } else {
      v.kind = Value::Kind::number;
      try {
        size_t used = 0;
        v.num = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
      } catch (const std::exception&) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad number '" + raw + "'");
      }
    }
    auto* kvs = doc.section(current, true);
    for (const auto& [k, _] : *kvs) {
      if (k == key)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key [" +
                          current + "]." + key);
    }
    kvs->emplace_back(key, std::move(v));
  }
  return doc;
}

TextDoc TextDoc::load(const std::string& path) {
  try {
    return parse(read_file(path), path);
  } catch (const UsageError& err) {
    throw ConfigError(err.what());
  }
}

bool TextDoc::has(const std::string& sec, const std::string& key) const {
  return find(sec, key) != nullptr;
}

const TextDoc::Value* TextDoc::find(const std::string& sec, const std::string& key) const {
  const auto* kvs = section(sec);
  if (kvs == nullptr) return nullptr;
  for (const auto& [k, v] : *kvs) {
    if (k == key) return &v;
  }
  return nullptr;
}

void TextDoc::set_number(const std::string& sec, const std::string& key, double v) {
  Value val;
  val.kind = Value::Kind::number;
  val.num = v;
  auto* kvs = section(sec, true);
  for (auto& [k, old] : *kvs) {
    if (k == key) {
      old = val;
      return;
    }
  }
  kvs->emplace_back(key, val);
}

void TextDoc::set_string(const std::string& sec, const std::string& key,
                         const std::string& v) {
  Value val;
  val.kind = Value::Kind::string;
  val.str = v;
  auto* kvs = section(sec, true);
  for (auto& [k, old] : *kvs) {
    if (k == key) {
      old = val;
      return;
    }
  }
  kvs->emplace_back(key, val);
}

void TextDoc::set_array(const std::string& sec, const std::string& key,
                        const std::vector<double>& v) {
  Value val;
  val.kind = Value::Kind::array;
  val.arr = v;
  auto* kvs = section(sec, true);
  for (auto& [k, old] : *kvs) {
    if (k == key) {
      old = val;
      return;
    }
  }
  kvs->emplace_back(key, val);
}

namespace {

std::string value_text(const TextDoc::Value& v) {
  switch (v.kind) {
    case TextDoc::Value::Kind::number:
      return format_double(v.num);
    case TextDoc::Value::Kind::string:
      return "\"" + v.str + "\"";
    case TextDoc::Value::Kind::boolean:
      return v.flag ? "true" : "false";
    case TextDoc::Value::Kind::array: {
      std::string out = "[";
      for (size_t i = 0; i < v.arr.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v.arr[i]);
      }
      return out + "]";
    }
  }
  return "";
}

}  // namespace

std::string TextDoc::serialize() const {
  std::ostringstream out;
  for (const auto& [sec, kvs] : sections_) {
    out << "[" << sec << "]\n";
    for (const auto& [k, v] : kvs) out << k << " = " << value_text(v) << "\n";
    out << "\n";
  }
  return out.str();
}

std::uint64_t TextDoc::content_hash() const {
  std::vector<std::string> lines;
  for (const auto& [sec, kvs] : sections_) {
    for (const auto& [k, v] : kvs) {
      lines.push_back("[" + sec + "]." + k + "=" + value_text(v));
    }
  }
  std::sort(lines.begin(), lines.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& l : lines) h = fnv1a(l, h);
  return h;
}

std::vector<std::string> TextDoc::keys() const {
  std::vector<std::string> out;
  for (const auto& [sec, kvs] : sections_) {
    for (const auto& [k, _] : kvs) out.push_back("[" + sec + "]." + k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

namespace {

// Strict reader: every consumed key is recorded so unknown keys can be
// rejected afterwards.
class StrictReader {
 public:
  explicit StrictReader(const TextDoc& doc) : doc_(doc) {}

  double number(const std::string& sec, const std::string& key) {
    const auto* v = require(sec, key);
    if (v->kind != TextDoc::Value::Kind::number) fail(sec, key, "a number");
    return v->num;
  }
  double number_or(const std::string& sec, const std::string& key, double fallback) {
    if (!doc_.has(sec, key)) return fallback;
    return number(sec, key);
  }
  std::string str(const std::string& sec, const std::string& key) {
    const auto* v = require(sec, key);
    if (v->kind != TextDoc::Value::Kind::string) fail(sec, key, "a string");
    return v->str;
  }
  std::string str_or(const std::string& sec, const std::string& key,
                     const std::string& fallback) {
    if (!doc_.has(sec, key)) return fallback;
    return str(sec, key);
  }
  std::vector<double> array(const std::string& sec, const std::string& key) {
    const auto* v = require(sec, key);
    if (v->kind != TextDoc::Value::Kind::array) fail(sec, key, "an array");
    return v->arr;
  }
  std::vector<double> array_or(const std::string& sec, const std::string& key,
                               std::vector<double> fallback) {
    if (!doc_.has(sec, key)) return fallback;
    return array(sec, key);
  }

  void finish() const {
    std::set<std::string> allowed(consumed_.begin(), consumed_.end());
    for (const auto& path : doc_.keys()) {
      if (allowed.count(path) == 0)
        throw ConfigError(doc_.origin() + ": unknown key " + path);
    }
  }

 private:
  const TextDoc::Value* require(const std::string& sec, const std::string& key) {
    consumed_.push_back("[" + sec + "]." + key);
    const auto* v = doc_.find(sec, key);
    if (v == nullptr)
      throw ConfigError(doc_.origin() + ": missing key [" + sec + "]." + key);
    return v;
  }
  [[noreturn]] void fail(const std::string& sec, const std::string& key,
                         const std::string& what) {
    throw ConfigError(doc_.origin() + ": [" + sec + "]." + key + " must be " + what);
  }

  const TextDoc& doc_;
  mutable std::vector<std::string> consumed_;
};

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

Mat to_mat(const std::vector<double>& v, int rows, int cols, const std::string& what) {
  if (static_cast<int>(v.size()) != rows * cols)
    throw ConfigError(what + ": expected " + std::to_string(rows * cols) + " entries, got " +
                      std::to_string(v.size()));
  Mat out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = v[static_cast<size_t>(r * cols + c)];
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& content, const std::string& origin,
                                         const std::string& name) {
  const TextDoc doc = TextDoc::parse(content, origin);
  StrictReader rd(doc);

  ExperimentConfig cfg;
  cfg.name = name;
  cfg.kind = rd.str("model", "kind");

  if (cfg.kind == "toy1d") {
    const double x_max = rd.number("constraints", "x_max");
    const double u_max = rd.number("constraints", "u_max");
    const double w_max = rd.number("constraints", "w_max");
    cfg.state_lo = Vec::Constant(1, -x_max);
    cfg.state_hi = Vec::Constant(1, x_max);
    cfg.input_lo = Vec::Constant(1, -u_max);
    cfg.input_hi = Vec::Constant(1, u_max);
    cfg.w_lo = Vec::Constant(1, -w_max);
    cfg.w_hi = Vec::Constant(1, w_max);
  } else if (cfg.kind == "cwh") {
    cfg.n_orbit_rad_s = rd.number("model", "n_orbit_rad_s");
    cfg.ts_s = rd.number("model", "ts_s");
    const double pos = rd.number("constraints", "pos_max");
    const double vel = rd.number("constraints", "vel_max");
    const double u_max = rd.number("constraints", "u_max");
    const double w_vel = rd.number("constraints", "w_vel_max");
    cfg.state_hi = Vec(6);
    cfg.state_hi << pos, pos, pos, vel, vel, vel;
    cfg.state_lo = -cfg.state_hi;
    cfg.input_hi = Vec::Constant(3, u_max);
    cfg.input_lo = -cfg.input_hi;
    cfg.w_hi = Vec::Zero(6);
    cfg.w_hi.tail(3).setConstant(w_vel);
    cfg.w_lo = -cfg.w_hi;
  } else if (cfg.kind == "bicycle") {
    cfg.wheelbase_m = rd.number("model", "wheelbase_m");
    cfg.ts_s = rd.number("model", "ts_s");
    cfg.v_eq_m_s = rd.number("model", "v_eq_m_s");
    const double lane = rd.number("constraints", "lane_half_width_m");
    const double psi = rd.number("constraints", "psi_max_deg") * kDeg;
    const double v_min = rd.number("constraints", "v_min_m_s");
    const double v_max = rd.number("constraints", "v_max_m_s");
    const double steer = rd.number("constraints", "steer_max_deg") * kDeg;
    const double dsteer = rd.number("constraints", "dsteer_max_deg") * kDeg;
    const double tau = rd.number("constraints", "tau_max_m_s2");
    const double w_psi = rd.number("constraints", "w_heading_deg") * kDeg;

    cfg.x_eq = Vec(4);
    cfg.x_eq << 0.0, 0.0, cfg.v_eq_m_s, 0.0;
    cfg.state_lo = Vec(4);
    cfg.state_hi = Vec(4);
    cfg.state_lo << -lane, -psi, v_min - cfg.v_eq_m_s, -steer;
    cfg.state_hi << lane, psi, v_max - cfg.v_eq_m_s, steer;
    cfg.input_lo = Vec(2);
    cfg.input_hi = Vec(2);
    cfg.input_lo << -dsteer, -tau;
    cfg.input_hi << dsteer, tau;
    cfg.w_lo = Vec::Zero(4);
    cfg.w_hi = Vec::Zero(4);
    cfg.w_lo[1] = -w_psi;
    cfg.w_hi[1] = w_psi;
  } else {
    throw ConfigError(origin + ": [model].kind must be toy1d, cwh or bicycle");
  }

  cfg.delta_bar = rd.number_or("synthesis", "delta_bar", 1e-3);
  cfg.synthesis.gamma_floor = rd.number_or("synthesis", "gamma_floor", 1e-6);
  cfg.synthesis.contraction_max = rd.number_or("synthesis", "contraction_max", 0.995);
  cfg.synthesis.lambda_grid_points =
      static_cast<int>(rd.number_or("synthesis", "lambda_grid_points", 99));
  cfg.synthesis.disturbance_inflation =
      rd.number_or("synthesis", "disturbance_inflation", 1.0);
  cfg.grid_points_per_axis =
      static_cast<int>(rd.number_or("synthesis", "grid_points_per_axis", 3));

  cfg.mode = rd.str_or("controller", "mode", "two_step");
  cfg.horizon = static_cast<int>(rd.number("controller", "horizon"));
  cfg.alpha_f = rd.number_or("controller", "alpha_f", 1e6);
  cfg.c_alpha = rd.number_or("controller", "c_alpha", 0.0);

  cfg.task_steps = static_cast<int>(rd.number("simulation", "task_steps"));
  Vec x0 = to_vec(rd.array("simulation", "x0"));
  cfg.disturbance = rd.str_or("simulation", "disturbance", "uniform");
  cfg.seed = static_cast<std::uint64_t>(rd.number_or("simulation", "seed", 0.0));

  cfg.objective_kind = rd.str_or("objective", "kind", "fuel");
  const int n_x = static_cast<int>(cfg.state_lo.size());
  const int n_u = static_cast<int>(cfg.input_lo.size());
  if (cfg.objective_kind == "filter" && doc.has("objective", "driver_gain")) {
    cfg.k_h = to_mat(rd.array("objective", "driver_gain"), n_u, n_x,
                     origin + ": [objective].driver_gain");
  }
  if (cfg.objective_kind == "quadratic_tracking") {
    cfg.q_track = to_mat(rd.array("objective", "q_diag"), 1, n_x, "q_diag").row(0).asDiagonal();
    cfg.r_track = to_mat(rd.array("objective", "r_diag"), 1, n_u, "r_diag").row(0).asDiagonal();
    cfg.z_ref = to_vec(rd.array_or("objective", "z_ref",
                                   std::vector<double>(static_cast<size_t>(n_x), 0.0)));
  }

  if (x0.size() != n_x)
    throw ConfigError(origin + ": [simulation].x0 has wrong dimension");
  cfg.x0 = cfg.x_eq.size() > 0 ? Vec(x0 - cfg.x_eq) : x0;

  rd.finish();
  cfg.config_hash = doc.content_hash();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const UsageError& err) {
    throw ConfigError(err.what());
  }
  const std::string stem = std::filesystem::path(path).stem().string();
  return parse(content, path, stem);
}

SystemModel make_model(const ExperimentConfig& cfg) {
  if (cfg.kind == "toy1d") return integrator_1d();
  if (cfg.kind == "cwh") return cwh_model(cfg.n_orbit_rad_s, cfg.ts_s);
  if (cfg.kind == "bicycle") {
    return shifted_model(bicycle_model(cfg.wheelbase_m, cfg.ts_s), cfg.x_eq);
  }
  throw ConfigError("make_model: unknown kind " + cfg.kind);
}

std::uint64_t model_hash(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  ss << cfg.kind;
  if (cfg.kind == "cwh") ss << "|" << format_double(cfg.n_orbit_rad_s) << "|"
                            << format_double(cfg.ts_s);
  if (cfg.kind == "bicycle")
    ss << "|" << format_double(cfg.wheelbase_m) << "|" << format_double(cfg.ts_s) << "|"
       << format_double(cfg.v_eq_m_s);
  return fnv1a(ss.str());
}

ObjectiveSpec make_objective(const ExperimentConfig& cfg) {
  if (cfg.objective_kind == "fuel") return ObjectiveSpec::fuel();
  if (cfg.objective_kind == "filter") return ObjectiveSpec::filter();
  if (cfg.objective_kind == "quadratic_tracking")
    return ObjectiveSpec::tracking(cfg.q_track, cfg.r_track, cfg.z_ref);
  throw ConfigError("unknown objective kind " + cfg.objective_kind);
}

std::vector<Jacobians> linearization_grid(const ExperimentConfig& cfg,
                                          const SystemModel& model) {
  if (model.is_linear) return {Jacobians{model.a, model.b}};
  // The bicycle rows do not depend on p_y, so gridding (psi, v, delta)
  // covers all linearisations within X.
  std::vector<Jacobians> out;
  const int gp = std::max(2, cfg.grid_points_per_axis);
  auto axis = [&](int dim) {
    std::vector<double> pts;
    for (int i = 0; i < gp; ++i) {
      const double t = static_cast<double>(i) / (gp - 1);
      pts.push_back(cfg.state_lo[dim] + t * (cfg.state_hi[dim] - cfg.state_lo[dim]));
    }
    return pts;
  };
  const Vec u0 = Vec::Zero(model.n_u);
  for (double psi : axis(1)) {
    for (double v : axis(2)) {
      for (double del : axis(3)) {
        Vec z(4);
        z << 0.0, psi, v, del;
        out.push_back(model.jacobians(z, u0));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DesignBundle
// ---------------------------------------------------------------------------

namespace {

std::vector<double> flatten(const Mat& m) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

}  // namespace

std::string DesignBundle::serialize() const {
  TextDoc doc;
  doc.set_string("meta", "kind", kind);
  doc.set_string("meta", "model_hash", format_hash(model_hash));
  doc.set_string("meta", "config_hash", format_hash(config_hash));
  doc.set_number("meta", "n_x", static_cast<double>(cbf.p.rows()));
  doc.set_number("meta", "n_u", static_cast<double>(tube.k_e.rows()));
  doc.set_array("tube", "shape", flatten(tube.e.shape));
  doc.set_array("tube", "k_e", flatten(tube.k_e));
  doc.set_number("tube", "contraction", tube.contraction);
  doc.set_array("terminal", "p", flatten(cbf.p));
  doc.set_array("terminal", "k_f", flatten(cbf.k_f));
  doc.set_number("terminal", "gamma_f", cbf.gamma_f);
  doc.set_number("terminal", "rho", cbf.rho);
  return doc.serialize();
}

DesignBundle DesignBundle::parse(const std::string& content, const std::string& origin) {
  const TextDoc doc = TextDoc::parse(content, origin);
  StrictReader rd(doc);
  DesignBundle b;
  b.kind = rd.str("meta", "kind");
  b.model_hash = std::stoull(rd.str("meta", "model_hash"), nullptr, 16);
  b.config_hash = std::stoull(rd.str("meta", "config_hash"), nullptr, 16);
  const int n = static_cast<int>(rd.number("meta", "n_x"));
  const int m = static_cast<int>(rd.number("meta", "n_u"));
  b.tube.e = Ellipsoid(to_mat(rd.array("tube", "shape"), n, n, origin + ": tube.shape"));
  b.tube.k_e = to_mat(rd.array("tube", "k_e"), m, n, origin + ": tube.k_e");
  b.tube.contraction = rd.number("tube", "contraction");
  b.cbf.p = to_mat(rd.array("terminal", "p"), n, n, origin + ": terminal.p");
  b.cbf.k_f = to_mat(rd.array("terminal", "k_f"), m, n, origin + ": terminal.k_f");
  b.cbf.gamma_f = rd.number("terminal", "gamma_f");
  b.cbf.rho = rd.number("terminal", "rho");
  rd.finish();
  return b;
}

DesignBundle DesignBundle::load(const std::string& path) {
  try {
    return parse(read_file(path), path);
  } catch (const UsageError& err) {
    throw ConfigError(err.what());
  }
}

void DesignBundle::save(const std::string& path) const {
  write_file_atomic(path, serialize());
}

// ---------------------------------------------------------------------------
// Synthesis pipeline
// ---------------------------------------------------------------------------

SynthesisOutput synthesize_design(const ExperimentConfig& cfg) {
  const SystemModel model = make_model(cfg);
  const Polytope x_poly = Polytope::box(cfg.state_lo, cfg.state_hi);
  const Polytope u_poly = Polytope::box(cfg.input_lo, cfg.input_hi);
  const DisturbanceBox w(cfg.w_lo, cfg.w_hi);
  const std::vector<Jacobians> systems = linearization_grid(cfg, model);

  SynthesisOutput out;
  std::ostringstream rep;
  rep << "synthesis report (" << cfg.name << ", kind " << cfg.kind << ")\n";

  RpiTube tube = synth_rpi_grid(systems, w, x_poly, u_poly, cfg.synthesis);
  rep << "rpi: lambda = " << format_double(tube.contraction) << "\n";
  for (int i = 0; i < x_poly.rows(); ++i) {
    rep << "  state row " << i << ": support "
        << format_double(support_on_ellipsoid(x_poly.a_rows.row(i).transpose(), tube.e))
        << " of bound " << format_double(x_poly.b[i]) << "\n";
  }
  const Ellipsoid kappa_e = map_ellipsoid(tube.k_e, tube.e);
  for (int j = 0; j < u_poly.rows(); ++j) {
    rep << "  input row " << j << ": support "
        << format_double(support_on_ellipsoid(u_poly.a_rows.row(j).transpose(), kappa_e))
        << " of bound " << format_double(u_poly.b[j]) << "\n";
  }

  const PaddingSchedule pad = PaddingSchedule::linear(cfg.horizon, cfg.delta_bar);
  const Polytope x_term = tighten(x_poly, tube.e, pad.at(cfg.horizon - 1));
  const Polytope u_tight = tighten(u_poly, kappa_e, 0.0);

  TerminalCbf cbf = synth_terminal_cbf_grid(systems, x_term, u_tight, cfg.synthesis);
  compute_gamma_f(cbf, x_term, u_tight, cfg.synthesis);
  rep << "terminal: gamma_f = " << format_double(cbf.gamma_f)
      << ", rho = " << format_double(cbf.rho) << "\n";

  if (!verify_sf_containment(cbf, x_term))
    throw SynthesisError("synthesize_design: S_f containment check failed");
  rep << "containment: S_f inside tightened X at the terminal stage: ok\n";

  const VerifyReport term_rep = verify_terminal(cbf, model, u_tight, 10000, cfg.seed + 17);
  rep << "terminal verification: " << term_rep.summary() << "\n";
  if (!term_rep.pass())
    throw SynthesisError("synthesize_design: terminal CBF verification failed: " +
                         term_rep.summary());

  if (!model.is_linear && !tube.degenerate()) {
    const VerifyReport rpi_rep =
        verify_rpi(tube, model, cfg.state_lo, cfg.state_hi,
                   Vec(-u_tight.b.tail(model.n_u)), Vec(u_tight.b.head(model.n_u)), w, 10000,
                   cfg.seed + 29);
    rep << "rpi sampling verification: " << rpi_rep.summary() << "\n";
    if (!rpi_rep.pass())
      throw SynthesisError("synthesize_design: RPI verification failed: " +
                           rpi_rep.summary());
  }

  out.bundle.tube = std::move(tube);
  out.bundle.cbf = std::move(cbf);
  out.bundle.kind = cfg.kind;
  out.bundle.model_hash = model_hash(cfg);
  out.bundle.config_hash = cfg.config_hash;
  out.report = rep.str();
  return out;
}

ScenarioConfig make_scenario(const ExperimentConfig& cfg, const DesignBundle& bundle,
                             const ScenarioOverrides& overrides) {
  if (bundle.model_hash != model_hash(cfg))
    throw ConfigError("design bundle does not match the model in this config");

  ScenarioConfig sc;
  sc.name = cfg.name;
  sc.model = make_model(cfg);
  sc.x_poly = Polytope::box(cfg.state_lo, cfg.state_hi);
  sc.u_poly = Polytope::box(cfg.input_lo, cfg.input_hi);
  sc.w_box = DisturbanceBox(cfg.w_lo, cfg.w_hi);
  sc.tube = bundle.tube;
  sc.cbf = bundle.cbf;
  sc.horizon = overrides.horizon.value_or(cfg.horizon);
  sc.pad = PaddingSchedule::linear(sc.horizon, cfg.delta_bar);
  sc.alpha_f = cfg.alpha_f;
  sc.task_steps = overrides.task_steps.value_or(cfg.task_steps);
  sc.x0 = cfg.x0;
  sc.mode = controller_mode_from_string(overrides.mode.value_or(cfg.mode));
  sc.c_alpha = overrides.c_alpha.value_or(cfg.c_alpha);
  sc.objective = make_objective(cfg);
  sc.policy = disturbance_policy_from_string(overrides.disturbance.value_or(cfg.disturbance));
  sc.seed = overrides.seed.value_or(cfg.seed);
  sc.k_h = cfg.k_h;
  sc.heading_index = 1;
  return sc;
}

}  // namespace pcbf
