#include "sslts/analysis/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

namespace fs = std::filesystem;

namespace sslts::analysis {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out.empty() ? "unnamed" : out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

constexpr const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                    "#66ccee", "#aa3377", "#999933", "#882255"};
constexpr int kPaletteSize = 8;

struct Svg {
  int w, h;
  std::string body;

  Svg(int w_, int h_) : w(w_), h(h_) {}

  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0) {
    body += "<line x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" + px(x2) + "\" y2=\"" +
            px(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + px(width) + "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                double width = 1.5) {
    if (pts.size() < 2) return;
    body += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + px(width) +
            "\" points=\"";
    for (const auto& [x, y] : pts) body += px(x) + "," + px(y) + " ";
    body += "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    body += "<circle cx=\"" + px(x) + "\" cy=\"" + px(y) + "\" r=\"" + px(r) + "\" fill=\"" +
            color + "\"/>\n";
  }

  void rect(double x, double y, double rw, double rh, const std::string& fill,
            const std::string& stroke = "") {
    body += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(rw) + "\" height=\"" +
            px(rh) + "\" fill=\"" + fill + "\"";
    if (!stroke.empty()) body += " stroke=\"" + stroke + "\"";
    body += "/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "start", const std::string& color = "#222222",
            double rotate = 0.0) {
    body += "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" font-size=\"" + std::to_string(size) +
            "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + color + "\"";
    if (rotate != 0.0)
      body += " transform=\"rotate(" + px(rotate) + " " + px(x) + " " + px(y) + ")\"";
    body += ">" + xml_escape(s) + "</text>\n";
  }

  std::string finish() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
           "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n" +
           body + "</svg>\n";
  }
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << content;
}

struct Axis {
  double lo = 0.0, hi = 1.0;  // data range (log10 space when log scale)
  double p0 = 0.0, p1 = 1.0;  // pixel range
  bool log = false;

  double map(double v) const {
    const double t = log ? std::log10(v) : v;
    return p0 + (t - lo) / (hi - lo) * (p1 - p0);
  }
};

Axis make_axis(double lo, double hi, double p0, double p1, bool log) {
  Axis ax;
  ax.log = log;
  ax.lo = log ? std::log10(lo) : lo;
  ax.hi = log ? std::log10(hi) : hi;
  if (ax.hi <= ax.lo) {
    ax.lo -= 0.5;
    ax.hi += 0.5;
  }
  const double pad = 0.05 * (ax.hi - ax.lo);
  ax.lo -= pad;
  ax.hi += pad;
  ax.p0 = p0;
  ax.p1 = p1;
  return ax;
}

// Ticks at decades for log axes, at 5 round positions otherwise; pairs of
// (data value, label).
std::vector<std::pair<double, std::string>> axis_ticks(const Axis& ax) {
  std::vector<std::pair<double, std::string>> ticks;
  if (ax.log) {
    for (int e = static_cast<int>(std::ceil(ax.lo)); e <= static_cast<int>(std::floor(ax.hi)); ++e)
      ticks.emplace_back(std::pow(10.0, e), "1e" + std::to_string(e));
    if (ticks.size() < 2) {
      ticks.clear();
      ticks.emplace_back(std::pow(10.0, ax.lo), fmt_short(std::pow(10.0, ax.lo)));
      ticks.emplace_back(std::pow(10.0, ax.hi), fmt_short(std::pow(10.0, ax.hi)));
    }
  } else {
    for (int i = 0; i <= 4; ++i) {
      const double v = ax.lo + (ax.hi - ax.lo) * static_cast<double>(i) / 4.0;
      ticks.emplace_back(v, fmt_short(v));
    }
  }
  return ticks;
}

void draw_frame(Svg& svg, const Axis& x, const Axis& y, const std::string& x_name,
                const std::string& y_name) {
  svg.line(x.p0, y.p0, x.p1, y.p0, "#222222");
  svg.line(x.p0, y.p0, x.p0, y.p1, "#222222");
  for (const auto& [v, label] : axis_ticks(x)) {
    const double xp = x.map(v);
    svg.line(xp, y.p0, xp, y.p0 + 4, "#222222");
    svg.text(xp, y.p0 + 18, label, 11, "middle");
  }
  for (const auto& [v, label] : axis_ticks(y)) {
    const double yp = y.map(v);
    svg.line(x.p0 - 4, yp, x.p0, yp, "#222222");
    svg.text(x.p0 - 7, yp + 4, label, 11, "end");
  }
  svg.text(0.5 * (x.p0 + x.p1), y.p0 + 36, x_name, 12, "middle");
  svg.text(18, 0.5 * (y.p0 + y.p1), y_name, 12, "middle", "#222222", -90.0);
}

std::string viridis(double v) {
  static constexpr double stops[5][3] = {{0.267, 0.005, 0.329},
                                         {0.231, 0.322, 0.545},
                                         {0.129, 0.567, 0.551},
                                         {0.369, 0.788, 0.382},
                                         {0.993, 0.906, 0.144}};
  v = std::clamp(v, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(v));
  const double f = v - i;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(255.0 * (stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(255.0 * (stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(255.0 * (stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

std::string scaling_plot(const ScalingSeries& s) {
  Svg svg(640, 480);
  std::vector<double> ys = s.y;
  std::vector<double> curve_n, curve_y;
  const double n_lo = s.n.front(), n_hi = s.n.back();
  for (int i = 0; i <= 128; ++i) {
    const double t = static_cast<double>(i) / 128.0;
    const double n = std::exp(std::log(n_lo) + t * (std::log(n_hi) - std::log(n_lo)));
    const double v = s.fit.c * std::pow(n, -s.fit.alpha) + s.fit.l0;
    if (v > 0.0) {
      curve_n.push_back(n);
      curve_y.push_back(v);
      ys.push_back(v);
    }
  }
  const auto [y_min, y_max] = std::minmax_element(ys.begin(), ys.end());
  const Axis x = make_axis(n_lo, n_hi, 70, 610, true);
  const Axis y = make_axis(*y_min, *y_max, 440, 40, *y_min > 0.0);

  draw_frame(svg, x, y, "corpus size", "value");
  svg.text(320, 22,
           s.label + "  C=" + fmt_short(s.fit.c) + " alpha=" + fmt_short(s.fit.alpha) +
               " L0=" + fmt_short(s.fit.l0) + " R2=" + fmt_short(s.fit.r_squared),
           13, "middle");

  std::vector<std::pair<double, double>> pts;
  for (size_t i = 0; i < curve_n.size(); ++i)
    pts.emplace_back(x.map(curve_n[i]), y.map(curve_y[i]));
  svg.polyline(pts, kPalette[1]);
  for (size_t i = 0; i < s.n.size(); ++i) svg.circle(x.map(s.n[i]), y.map(s.y[i]), 4, kPalette[0]);
  return svg.finish();
}

std::string heatmap_plot(const std::string& title, const CKAMatrix& m) {
  const int64_t l = m.size();
  const double cell = std::clamp(440.0 / static_cast<double>(l), 14.0, 48.0);
  const double left = 130, top = 50;
  const double side = cell * static_cast<double>(l);
  Svg svg(static_cast<int>(left + side + 30), static_cast<int>(top + side + 130));

  svg.text(left + side / 2, 26, title, 14, "middle");
  for (int64_t i = 0; i < l; ++i) {
    for (int64_t j = 0; j < l; ++j) {
      const double v = m.at(i, j);
      const double cx = left + cell * static_cast<double>(j);
      const double cy = top + cell * static_cast<double>(i);
      svg.rect(cx, cy, cell, cell, viridis(v), "#ffffff");
      if (cell >= 26.0)
        svg.text(cx + cell / 2, cy + cell / 2 + 4, fmt_short(v), 9, "middle",
                 v > 0.6 ? "#222222" : "#eeeeee");
    }
    svg.text(left - 6, top + cell * (static_cast<double>(i) + 0.5) + 4, m.labels[static_cast<size_t>(i)],
             11, "end");
  }
  for (int64_t j = 0; j < l; ++j)
    svg.text(left + cell * (static_cast<double>(j) + 0.5), top + side + 14,
             m.labels[static_cast<size_t>(j)], 11, "end", "#222222", -45.0);
  return svg.finish();
}

std::string efficiency_plot(const std::vector<EfficiencyCurve>& curves) {
  Svg svg(640, 480);
  double f_lo = 1.0, f_hi = 0.0, r_lo = 0.0, r_hi = 0.0;
  bool first = true;
  for (const auto& c : curves)
    for (size_t i = 0; i < c.fractions.size(); ++i) {
      f_lo = std::min(f_lo, c.fractions[i]);
      f_hi = std::max(f_hi, c.fractions[i]);
      if (first) {
        r_lo = r_hi = c.residuals[i];
        first = false;
      }
      r_lo = std::min(r_lo, c.residuals[i]);
      r_hi = std::max(r_hi, c.residuals[i]);
    }
  const Axis x = make_axis(f_lo, f_hi, 70, 610, true);
  const Axis y = make_axis(r_lo, r_hi, 440, 40, false);
  draw_frame(svg, x, y, "labeled fraction", "residual error");
  svg.text(320, 22, "label efficiency", 13, "middle");

  for (size_t c = 0; c < curves.size(); ++c) {
    const std::string color = kPalette[c % kPaletteSize];
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < curves[c].fractions.size(); ++i)
      pts.emplace_back(x.map(curves[c].fractions[i]), y.map(curves[c].residuals[i]));
    svg.polyline(pts, color);
    for (const auto& [xp, yp] : pts) svg.circle(xp, yp, 4, color);
    const double ly = 46.0 + 16.0 * static_cast<double>(c);
    svg.rect(500, ly - 9, 10, 10, color);
    svg.text(514, ly, curves[c].label, 11);
  }
  return svg.finish();
}

std::string scatter_plot(const ScatterSeries& s) {
  Svg svg(640, 480);
  const auto [x_min, x_max] = std::minmax_element(s.x.begin(), s.x.end());
  const auto [y_min, y_max] = std::minmax_element(s.y.begin(), s.y.end());
  const Axis x = make_axis(*x_min, *x_max, 70, 610, false);
  const Axis y = make_axis(*y_min, *y_max, 440, 40, false);
  draw_frame(svg, x, y, s.x_name, s.y_name);
  svg.text(320, 22,
           s.label + "  spearman r=" + fmt_short(s.correlation.r) + " p=" +
               fmt_short(s.correlation.p),
           13, "middle");
  for (size_t i = 0; i < s.x.size(); ++i) svg.circle(x.map(s.x[i]), y.map(s.y[i]), 4, kPalette[0]);
  return svg.finish();
}

}  // namespace

void emit_report(const ReportProducts& products, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  if (!products.scaling.empty()) {
    std::string csv = "series,C,alpha,L0,R2,form,converged,degenerate\n";
    for (const auto& s : products.scaling) {
      csv += s.label + "," + fmt(s.fit.c) + "," + fmt(s.fit.alpha) + "," + fmt(s.fit.l0) + "," +
             fmt(s.fit.r_squared) + "," +
             (s.fit.model == FitModel::kPurePower ? "pure_power" : "power_plus_floor") + "," +
             (s.fit.converged ? "1" : "0") + "," + (s.fit.degenerate ? "1" : "0") + "\n";
      write_file(dir / ("scaling_" + sanitize(s.label) + ".svg"), scaling_plot(s));
    }
    write_file(dir / "scaling_fits.csv", csv);
  }

  for (const auto& [label, matrix] : products.cka) {
    std::string csv = "layer";
    for (const auto& l : matrix.labels) csv += "," + l;
    csv += "\n";
    for (int64_t i = 0; i < matrix.size(); ++i) {
      csv += matrix.labels[static_cast<size_t>(i)];
      for (int64_t j = 0; j < matrix.size(); ++j) csv += "," + fmt(matrix.at(i, j));
      csv += "\n";
    }
    write_file(dir / ("cka_" + sanitize(label) + ".csv"), csv);
    write_file(dir / ("cka_" + sanitize(label) + ".svg"), heatmap_plot(label, matrix));
  }

  if (!products.label_eff.empty()) {
    std::string csv = "series,fraction,residual\n";
    for (const auto& c : products.label_eff)
      for (size_t i = 0; i < c.fractions.size(); ++i)
        csv += c.label + "," + fmt(c.fractions[i]) + "," + fmt(c.residuals[i]) + "\n";
    write_file(dir / "label_efficiency.csv", csv);
    write_file(dir / "label_efficiency.svg", efficiency_plot(products.label_eff));
  }

  if (!products.scatter.empty()) {
    std::string csv = "series,x_name,y_name,x,y,spearman_r,spearman_p\n";
    for (const auto& s : products.scatter) {
      for (size_t i = 0; i < s.x.size(); ++i)
        csv += s.label + "," + s.x_name + "," + s.y_name + "," + fmt(s.x[i]) + "," + fmt(s.y[i]) +
               "," + fmt(s.correlation.r) + "," + fmt(s.correlation.p) + "\n";
      write_file(dir / ("correlation_" + sanitize(s.label) + ".svg"), scatter_plot(s));
    }
    write_file(dir / "correlation.csv", csv);
  }

  if (!products.ranks.empty()) {
    std::string csv = "task,model,rank\n";
    for (const auto& r : products.ranks)
      for (size_t i = 0; i < r.models.size(); ++i)
        csv += r.task + "," + r.models[i] + "," + std::to_string(r.table.ranks[i]) + "\n";
    write_file(dir / "ranks.csv", csv);
  }
}

}  // namespace sslts::analysis
