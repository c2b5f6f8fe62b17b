#pragma once

#include "pcbf/sim.hpp"

#include <string>
#include <vector>

namespace pcbf {

/// Minimal SVG line chart used for the run/compare reports.
class LineChart {
 public:
  LineChart(std::string title, std::string x_label, std::string y_label);

  void add_series(std::string name, std::vector<double> xs, std::vector<double> ys);
  /// Dashed horizontal guide (constraint bounds and the like).
  void add_hline(double y, std::string name = "");

  std::string render(int width = 860, int height = 480) const;

 private:
  struct Series {
    std::string name;
    std::vector<double> xs, ys;
  };
  std::string title_, x_label_, y_label_;
  std::vector<Series> series_;
  std::vector<std::pair<double, std::string>> hlines_;
};

/// Barrier value and bound vs time.
std::string render_value_chart(const std::vector<RunLog>& logs);

/// State trajectories vs the box bounds of X.
std::string render_state_chart(const RunLog& log, const Polytope& x_poly);
std::string render_state_chart(const RunLog& log);

}  // namespace pcbf
