#pragma once

// Agreement between two metrics exports: Pearson correlation and mean
// absolute error per metric, over words joined by word_index.

#include <array>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eyelive/csv.hpp"

namespace eyelive {

struct MetricRow {
  std::string label;   // display name
  std::string column;  // CSV column
};

inline const std::array<MetricRow, 13>& compared_metrics() {
  static const std::array<MetricRow, 13> rows = {{{"TFD", "TFD"},
                                                  {"AFD", "AFD"},
                                                  {"MiFD", "MiFD"},
                                                  {"MaFD", "MaFD"},
                                                  {"#F", "F_count"},
                                                  {"TFF", "TFF_ts"},
                                                  {"FFD", "FFD"},
                                                  {"FpFFD", "FpFFD"},
                                                  {"FpD", "FpD"},
                                                  {"FpR", "FpR"},
                                                  {"RPD", "RPD"},
                                                  {"sRPD", "sRPD"},
                                                  {"RRD", "RRD"}}};
  return rows;
}

struct MetricAgreement {
  std::string metric;
  std::size_t n = 0;
  std::optional<double> rho;  // absent: fewer than two rows or zero variance
  double mae = 0.0;
  double sd = 0.0;  // population SD of the absolute errors
};

struct ComparisonReport {
  std::vector<MetricAgreement> rows;
};

inline MetricAgreement agreement(std::string metric, const std::vector<double>& a, const std::vector<double>& b) {
  MetricAgreement r;
  r.metric = std::move(metric);
  r.n = a.size();
  if (r.n == 0) return r;
  const double n = static_cast<double>(r.n);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sxx = 0, syy = 0, sxy = 0, err = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double dx = a[i] - ma, dy = b[i] - mb;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
    err += std::abs(a[i] - b[i]);
  }
  r.mae = err / n;
  double var = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = std::abs(a[i] - b[i]) - r.mae;
    var += d * d;
  }
  r.sd = std::sqrt(var / n);
  if (r.n >= 2 && sxx > 0 && syy > 0) r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return r;
}

inline ComparisonReport compare(const MetricsTable& a, const MetricsTable& b) {
  ComparisonReport rep;
  for (const auto& m : compared_metrics()) {
    std::vector<double> xa, xb;
    for (const auto& [wi, ra] : a.rows) {
      auto it = b.rows.find(wi);
      if (it == b.rows.end()) continue;
      const auto& va = ra.values.find(m.column)->second;
      const auto& vb = it->second.values.find(m.column)->second;
      if (!va || !vb) continue;
      xa.push_back(*va);
      xb.push_back(*vb);
    }
    rep.rows.push_back(agreement(m.label, xa, xb));
  }
  return rep;
}

inline bool all_exact(const ComparisonReport& r) {
  for (const auto& row : r.rows) {
    if (row.mae != 0.0 || (row.rho && *row.rho != 1.0)) return false;
  }
  return true;
}

inline void print_report(std::ostream& os, const ComparisonReport& r) {
  os << std::left << std::setw(8) << "Metric" << std::right << std::setw(8) << "n" << std::setw(10) << "rho"
     << "  MAE (SD)\n";
  for (const auto& row : r.rows) {
    std::ostringstream rho;
    if (row.rho) {
      rho << std::fixed << std::setprecision(3) << *row.rho;
    } else {
      rho << "n/a";
    }
    os << std::left << std::setw(8) << row.metric << std::right << std::setw(8) << row.n << std::setw(10)
       << rho.str() << "  " << std::fixed << std::setprecision(3) << row.mae << " (" << row.sd << ")\n";
    os.unsetf(std::ios::fixed);
  }
}

}  // namespace eyelive
