#include "pcbf/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pcbf {

namespace {

const char* kPalette[] = {"#c0392b", "#2471a3", "#1e8449", "#9a7d0a",
                          "#7d3c98", "#148f77", "#a04000", "#5d6d7e"};

}  // namespace

LineChart::LineChart(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void LineChart::add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
  series_.push_back({std::move(name), std::move(xs), std::move(ys)});
}

void LineChart::add_hline(double y, std::string name) {
  hlines_.emplace_back(y, std::move(name));
}

std::string LineChart::render(int width, int height) const {
  const double ml = 70, mr = 150, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series_) {
    for (double v : s.xs) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.ys) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  for (const auto& [y, _] : hlines_) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
  }
  if (!std::isfinite(ymin)) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << title_ << "</text>\n";

  // Axes and ticks.
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + t * (xmax - xmin) / 5.0;
    const double fy = ymin + t * (ymax - ymin) / 5.0;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(fx)
        << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(std::round(fx * 1000.0) / 1000.0) << "</text>\n";
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
        << py(fy) << "\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(std::round(fy * 1000.0) / 1000.0) << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label_
      << "</text>\n";
  svg << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << y_label_ << "</text>\n";

  for (const auto& [y, name] : hlines_) {
    svg << "<line x1=\"" << ml << "\" y1=\"" << py(y) << "\" x2=\"" << ml + pw << "\" y2=\""
        << py(y) << "\" stroke=\"#555\" stroke-dasharray=\"6 4\"/>\n";
    if (!name.empty()) {
      svg << "<text x=\"" << ml + pw + 6 << "\" y=\"" << py(y) + 4
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#555\">" << name
          << "</text>\n";
    }
  }

  int ci = 0;
  double legend_y = mt + 10;
  for (const auto& s : series_) {
    const char* color = kPalette[ci % 8];
    std::ostringstream pts;
    for (size_t i = 0; i < s.xs.size(); ++i) {
      pts << (i ? " " : "") << px(s.xs[i]) << "," << py(s.ys[i]);
    }
    svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.6\"/>\n";
    svg << "<line x1=\"" << ml + pw + 8 << "\" y1=\"" << legend_y << "\" x2=\"" << ml + pw + 28
        << "\" y2=\"" << legend_y << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << ml + pw + 32 << "\" y=\"" << legend_y + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
    legend_y += 16;
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_value_chart(const std::vector<RunLog>& logs) {
  LineChart chart("barrier value vs step", "k", "h");
  for (const auto& log : logs) {
    std::vector<double> xs, ys, bs;
    for (const auto& rec : log.records) {
      xs.push_back(rec.k);
      ys.push_back(rec.value);
      bs.push_back(rec.bound);
    }
    const std::string label = log.mode + "(c=" + format_double(log.c_alpha) + ")";
    chart.add_series(label, xs, ys);
    if (log.mode == "multiobjective") chart.add_series(label + " bound", xs, bs);
  }
  chart.add_hline(0.0);
  return chart.render();
}

std::string render_state_chart(const RunLog& log, const Polytope& x_poly) {
  LineChart chart(log.scenario + " state envelope (" + log.mode + ")", "k", "x");
  for (int d = 0; d < log.n_x; ++d) {
    std::vector<double> xs, ys;
    for (const auto& rec : log.records) {
      xs.push_back(rec.k);
      ys.push_back(rec.x[d]);
    }
    chart.add_series("x" + std::to_string(d), xs, ys);
  }
  // Box rows show up as horizontal bounds.
  for (int i = 0; i < x_poly.rows(); ++i) {
    int nz = 0, at = -1;
    for (int j = 0; j < x_poly.dim(); ++j) {
      if (x_poly.a_rows(i, j) != 0.0) {
        ++nz;
        at = j;
      }
    }
    if (nz == 1) {
      chart.add_hline(x_poly.b[i] / x_poly.a_rows(i, at),
                      "bound x" + std::to_string(at));
    }
  }
  return chart.render();
}

std::string render_state_chart(const RunLog& log) {
  LineChart chart(log.scenario + " state envelope (" + log.mode + ")", "k", "x");
  for (int d = 0; d < log.n_x; ++d) {
    std::vector<double> xs, ys;
    for (const auto& rec : log.records) {
      xs.push_back(rec.k);
      ys.push_back(rec.x[d]);
    }
    chart.add_series("x" + std::to_string(d), xs, ys);
  }
  return chart.render();
}

}  // namespace pcbf
