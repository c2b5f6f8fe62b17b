#pragma once

#include "pcbf/sim.hpp"
#include "pcbf/synthesis.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pcbf {

/// Line-oriented structured text: [section] headers, key = value pairs,
/// '#' comments. Values are numbers, quoted strings, booleans or flat
/// numeric arrays [a, b, c]. This one format carries experiment configs,
/// design bundles and reports.
class TextDoc {
 public:
  struct Value {
    enum class Kind { number, string, boolean, array };
    Kind kind = Kind::number;
    double num = 0.0;
    std::string str;
    bool flag = false;
    std::vector<double> arr;
    int line = 0;
  };

  static TextDoc parse(const std::string& content, const std::string& origin = "<string>");
  static TextDoc load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const Value* find(const std::string& section, const std::string& key) const;

  void set_number(const std::string& section, const std::string& key, double v);
  void set_string(const std::string& section, const std::string& key, const std::string& v);
  void set_array(const std::string& section, const std::string& key,
                 const std::vector<double>& v);

  std::string serialize() const;
  /// Canonical serialisation (sorted sections/keys) for hashing.
  std::uint64_t content_hash() const;

  const std::string& origin() const { return origin_; }

  /// Key paths present in the document, "[section].key".
  std::vector<std::string> keys() const;

 private:
  std::string origin_;
  // Order-preserving storage.
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Value>>>> sections_;

  std::vector<std::pair<std::string, Value>>* section(const std::string& name, bool create);
  const std::vector<std::pair<std::string, Value>>* section(const std::string& name) const;
};

/// Parsed experiment description. Everything downstream (model, constraint
/// boxes, synthesis options, scenario) is derived from this; for the bicycle
/// all sets and states are expressed in deviation coordinates around the
/// straight-driving equilibrium.
struct ExperimentConfig {
  std::string kind;  // toy1d | cwh | bicycle
  std::string name;  // config stem, used in output file names

  // model parameters
  double n_orbit_rad_s = 0.00113;
  double ts_s = 10.0;
  double wheelbase_m = 0.09;
  double v_eq_m_s = 1.1;

  // constraint boxes (deviation coordinates where applicable)
  Vec state_lo, state_hi;
  Vec input_lo, input_hi;
  Vec w_lo, w_hi;
  Vec x_eq;  // physical equilibrium; empty when no shift applies

  SynthesisOptions synthesis;
  double delta_bar = 1e-3;
  int grid_points_per_axis = 3;

  std::string mode = "two_step";
  int horizon = 1;
  double alpha_f = 1e6;
  double c_alpha = 0.0;

  int task_steps = 1;
  Vec x0;  // deviation coordinates
  std::string disturbance = "uniform";
  std::uint64_t seed = 0;

  std::string objective_kind = "fuel";
  Mat k_h;          // proposed-input gain on the deviation state
  Mat q_track, r_track;
  Vec z_ref;

  std::uint64_t config_hash = 0;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& content, const std::string& origin,
                                const std::string& name);
};

SystemModel make_model(const ExperimentConfig& cfg);
std::uint64_t model_hash(const ExperimentConfig& cfg);
ObjectiveSpec make_objective(const ExperimentConfig& cfg);

/// Linearisation points used for the gridded synthesis (one entry for linear
/// models).
std::vector<Jacobians> linearization_grid(const ExperimentConfig& cfg,
                                          const SystemModel& model);

struct DesignBundle {
  RpiTube tube;
  TerminalCbf cbf;
  std::uint64_t model_hash = 0;
  std::uint64_t config_hash = 0;
  std::string kind;

  std::string serialize() const;
  static DesignBundle parse(const std::string& content, const std::string& origin);
  static DesignBundle load(const std::string& path);
  void save(const std::string& path) const;
};

struct SynthesisOutput {
  DesignBundle bundle;
  std::string report;  // human-readable synthesis summary
};

/// Full offline design: RPI tube, terminal CBF, gamma_f, containment and
/// sampling verification. Throws SynthesisError when any stage fails.
SynthesisOutput synthesize_design(const ExperimentConfig& cfg);

struct ScenarioOverrides {
  std::optional<std::string> mode;
  std::optional<double> c_alpha;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::optional<int> task_steps;
  std::optional<std::string> disturbance;
};

/// Assembles the closed-loop scenario from config + design, with CLI-style
/// overrides. Verifies the bundle hashes against the config.
ScenarioConfig make_scenario(const ExperimentConfig& cfg, const DesignBundle& bundle,
                             const ScenarioOverrides& overrides = {});

}  // namespace pcbf
