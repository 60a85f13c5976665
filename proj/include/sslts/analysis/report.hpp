#pragma once

#include <string>
#include <vector>

#include "sslts/analysis/cka.hpp"
#include "sslts/analysis/scaling.hpp"
#include "sslts/analysis/stats.hpp"

namespace sslts::analysis {

struct ScalingSeries {
  std::string label;
  std::vector<double> n;  // corpus sizes
  std::vector<double> y;  // losses or error rates
  FitResult fit;
};

struct EfficiencyCurve {
  std::string label;
  std::vector<double> fractions;
  std::vector<double> residuals;
};

struct ScatterSeries {
  std::string label;
  std::string x_name;
  std::string y_name;
  std::vector<double> x;
  std::vector<double> y;
  SpearmanResult correlation;
};

struct RankedTask {
  std::string task;
  std::vector<std::string> models;
  RankTable table;
};

struct ReportProducts {
  std::vector<ScalingSeries> scaling;
  std::vector<std::pair<std::string, CKAMatrix>> cka;
  std::vector<EfficiencyCurve> label_eff;
  std::vector<ScatterSeries> scatter;
  std::vector<RankedTask> ranks;
};

// Writes one CSV table per product family and a static SVG plot per visual
// product into out_dir: scaling_fits.csv plus a log-log fit overlay per
// series, a matrix CSV plus heatmap (with per-layer tick labels) per CKA
// matrix, label_efficiency.csv plus curve plot, correlation.csv plus scatter
// per series, and ranks.csv. Output is a pure function of the inputs, so
// reruns produce byte-identical files.
void emit_report(const ReportProducts& products, const std::string& out_dir);

}  // namespace sslts::analysis
