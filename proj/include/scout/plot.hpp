#pragma once

// Static SVG charts built only from CSV contents. Output depends on nothing
// but the input rows, so re-plotting is byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "scout/error.hpp"
#include "scout/text_io.hpp"
#include "scout/trainer.hpp"

namespace scout::plot {

struct Line {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Line> lines;
};

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void render_panel(std::ostream& out, const Panel& p, double ox, double oy, double w, double h) {
  constexpr double ml = 60, mr = 15, mt = 30, mb = 45;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const Line& l : p.lines) {
    for (auto [x, y] : l.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto sx = [&](double x) { return ox + ml + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return oy + mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  out << "<text x=\"" << fmt(ox + w / 2) << "\" y=\"" << fmt(oy + 18)
      << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(p.title) << "</text>\n";
  out << "<rect x=\"" << fmt(ox + ml) << "\" y=\"" << fmt(oy + mt) << "\" width=\"" << fmt(pw) << "\" height=\""
      << fmt(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    out << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << fmt(oy + mt + ph + 15)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(xv, "%.4g") << "</text>\n";
    out << "<text x=\"" << fmt(ox + ml - 4) << "\" y=\"" << fmt(sy(yv) + 3)
        << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(yv, "%.4g") << "</text>\n";
  }
  out << "<text x=\"" << fmt(ox + ml + pw / 2) << "\" y=\"" << fmt(oy + h - 8)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.x_label) << "</text>\n";
  out << "<text x=\"" << fmt(ox + 12) << "\" y=\"" << fmt(oy + mt + ph / 2) << "\" text-anchor=\"middle\" "
      << "font-size=\"11\" transform=\"rotate(-90 " << fmt(ox + 12) << ' ' << fmt(oy + mt + ph / 2) << ")\">"
      << escape(p.y_label) << "</text>\n";
  for (std::size_t i = 0; i < p.lines.size(); ++i) {
    const Line& l = p.lines[i];
    const char* color = kPalette[i % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (auto [x, y] : l.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      out << (first ? "" : " ") << fmt(sx(x)) << ',' << fmt(sy(y));
      first = false;
    }
    out << "\"/>\n";
    const double ly = oy + mt + 12 + 14 * static_cast<double>(i);
    out << "<line x1=\"" << fmt(ox + ml + pw - 110) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(ox + ml + pw - 92)
        << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << fmt(ox + ml + pw - 88) << "\" y=\"" << fmt(ly + 4) << "\" font-size=\"10\">"
        << escape(l.label) << "</text>\n";
  }
}

// Panels side by side in one image.
inline void render_svg(std::ostream& out, const std::vector<Panel>& panels, double panel_w = 360,
                       double panel_h = 280) {
  const double w = panel_w * static_cast<double>(std::max<std::size_t>(1, panels.size()));
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w, "%.0f") << "\" height=\""
      << fmt(panel_h, "%.0f") << "\" viewBox=\"0 0 " << fmt(w, "%.0f") << ' ' << fmt(panel_h, "%.0f") << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    render_panel(out, panels[i], panel_w * static_cast<double>(i), 0, panel_w, panel_h);
  }
  out << "</svg>\n";
}

// Seed-averaged curve per algorithm for one metrics column.
inline std::vector<Line> metric_lines(const std::vector<MetricsRow>& rows, double MetricsRow::*field) {
  std::map<std::string, std::map<std::int64_t, std::pair<double, int>>> acc;
  for (const MetricsRow& r : rows) {
    auto& cell = acc[r.algorithm][r.step];
    cell.first += r.*field;
    cell.second += 1;
  }
  std::vector<Line> lines;
  for (const auto& [algo, steps] : acc) {
    Line l{algo, {}};
    for (const auto& [step, cell] : steps) {
      l.points.emplace_back(static_cast<double>(step), cell.first / cell.second);
    }
    lines.push_back(std::move(l));
  }
  return lines;
}

// Return, actor gradient norm and critic loss against update step.
inline std::vector<Panel> training_panels(const std::vector<MetricsRow>& rows) {
  return {{"(a) mean return", "update step", "return", metric_lines(rows, &MetricsRow::mean_return)},
          {"(b) actor gradient norm", "update step", "grad norm", metric_lines(rows, &MetricsRow::actor_grad_norm)},
          {"(c) critic loss", "update step", "loss", metric_lines(rows, &MetricsRow::critic_loss)}};
}

struct EfficiencyRow {
  std::int64_t query_id = 0;
  std::string algorithm;
  std::int64_t calls = 0;
  double recall = 0.0;
};

inline std::vector<EfficiencyRow> read_efficiency_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "query_id,algorithm,calls,recall") {
    throw FormatError("not an efficiency CSV");
  }
  std::vector<EfficiencyRow> rows;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    if (f.size() != 4) throw FormatError("efficiency row has wrong column count: " + line);
    rows.push_back({text::parse_int(f[0]), std::string(f[1]), text::parse_int(f[2]), text::parse_real(f[3])});
  }
  return rows;
}

// Mean over queries of the recall reached within c calls, for c = 0..max.
inline std::vector<Line> efficiency_lines(const std::vector<EfficiencyRow>& rows) {
  std::map<std::string, std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>>> curves;
  std::int64_t max_calls = 0;
  for (const EfficiencyRow& r : rows) {
    curves[r.algorithm][r.query_id].emplace_back(r.calls, r.recall);
    max_calls = std::max(max_calls, r.calls);
  }
  std::vector<Line> lines;
  for (auto& [algo, queries] : curves) {
    Line l{algo, {}};
    for (auto& [q, pts] : queries) std::sort(pts.begin(), pts.end());
    for (std::int64_t c = 0; c <= max_calls; ++c) {
      double sum = 0.0;
      for (const auto& [q, pts] : queries) {
        double r = 0.0;
        for (auto [calls, rec] : pts) {
          if (calls <= c) r = rec;
        }
        sum += r;
      }
      l.points.emplace_back(static_cast<double>(c), sum / static_cast<double>(queries.size()));
    }
    lines.push_back(std::move(l));
  }
  return lines;
}

inline std::vector<Panel> efficiency_panels(const std::vector<EfficiencyRow>& rows) {
  return {{"recall vs tool calls", "cumulative tool calls", "recall", efficiency_lines(rows)}};
}

}  // namespace scout::plot
