// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace groklab {

namespace {

// Continued fraction for the incomplete beta function, modified Lentz.
double incomplete_beta_cf(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double tolerance = 1e-15;
  constexpr int max_terms = 10000;

  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double result = d;

  for (int m = 1; m <= max_terms; ++m) {
    const double dm = static_cast<double>(m);
    // even term
    double numer = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + numer * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    result *= d * c;
    // odd term
    numer = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + numer * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + numer / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    result *= delta;
    if (std::fabs(delta - 1.0) < tolerance) break;
  }
  return result;
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs, double mean) {
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0) || a <= 0.0 || b <= 0.0) {
    throw AnalysisError("regularized_incomplete_beta: invalid arguments");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * incomplete_beta_cf(x, a, b) / a;
  }
  return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) - log_beta(b, a)) *
                   incomplete_beta_cf(1.0 - x, b, a) / b;
}

double t_survival(double t, double df) {
  if (df <= 0.0) throw AnalysisError("t_survival: df must be positive");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
  return t > 0.0 ? half_tail : 1.0 - half_tail;
}

namespace {

TTestResult finish_two_sided(TTestResult r) {
  r.p_value = 2.0 * t_survival(std::fabs(r.t_statistic), r.degrees_of_freedom);
  if (r.p_value > 1.0) r.p_value = 1.0;
  return r;
}

void check_samples(std::span<const double> a, std::span<const double> b, double va, double vb) {
  if (a.size() < 2 || b.size() < 2) {
    throw AnalysisError("t-test needs >= 2 values per sample, got " + std::to_string(a.size()) +
                        " and " + std::to_string(b.size()));
  }
  if (va == 0.0 && vb == 0.0) {
    throw AnalysisError("t-test: zero combined variance");
  }
}

}  // namespace

TTestResult welch_t_test(std::span<const double> sample_a, std::span<const double> sample_b) {
  TTestResult r;
  r.n_a = static_cast<int>(sample_a.size());
  r.n_b = static_cast<int>(sample_b.size());
  if (sample_a.size() < 2 || sample_b.size() < 2) check_samples(sample_a, sample_b, 1.0, 1.0);
  r.mean_a = sample_mean(sample_a);
  r.mean_b = sample_mean(sample_b);
  const double va = sample_variance(sample_a, r.mean_a);
  const double vb = sample_variance(sample_b, r.mean_b);
  check_samples(sample_a, sample_b, va, vb);

  const double sa = va / r.n_a;
  const double sb = vb / r.n_b;
  r.t_statistic = (r.mean_a - r.mean_b) / std::sqrt(sa + sb);
  r.degrees_of_freedom = (sa + sb) * (sa + sb) /
                         (sa * sa / (r.n_a - 1) + sb * sb / (r.n_b - 1));
  return finish_two_sided(r);
}

TTestResult pooled_t_test(std::span<const double> sample_a, std::span<const double> sample_b) {
  TTestResult r;
  r.n_a = static_cast<int>(sample_a.size());
  r.n_b = static_cast<int>(sample_b.size());
  if (sample_a.size() < 2 || sample_b.size() < 2) check_samples(sample_a, sample_b, 1.0, 1.0);
  r.mean_a = sample_mean(sample_a);
  r.mean_b = sample_mean(sample_b);
  const double va = sample_variance(sample_a, r.mean_a);
  const double vb = sample_variance(sample_b, r.mean_b);
  check_samples(sample_a, sample_b, va, vb);

  r.degrees_of_freedom = static_cast<double>(r.n_a + r.n_b - 2);
  const double pooled = ((r.n_a - 1) * va + (r.n_b - 1) * vb) / r.degrees_of_freedom;
  r.t_statistic =
      (r.mean_a - r.mean_b) / std::sqrt(pooled * (1.0 / r.n_a + 1.0 / r.n_b));
  return finish_two_sided(r);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw AnalysisError("quantile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  double h = (n + 1.0) * p;
  if (h < 1.0) h = 1.0;
  if (h > n) h = n;
  const std::size_t lo = static_cast<std::size_t>(h) - 1;
  const double frac = h - std::floor(h);
  if (lo + 1 >= sorted.size()) return sorted[sorted.size() - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<GroupSummary> summarize(const std::vector<GroupSample>& groups) {
  std::vector<GroupSummary> rows;
  rows.reserve(groups.size());
  for (const GroupSample& g : groups) {
    GroupSummary row;
    row.group = g.group;
    row.n = g.total_runs;
    row.grok_rate = g.total_runs == 0
                        ? 0.0
                        : static_cast<double>(g.epochs.size()) / static_cast<double>(g.total_runs);
    if (g.epochs.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.mean_epoch = row.median_epoch = row.min_epoch = row.max_epoch = nan;
    } else {
      std::vector<double> sorted = g.epochs;
      std::sort(sorted.begin(), sorted.end());
      row.mean_epoch = sample_mean(sorted);
      row.median_epoch = quantile_sorted(sorted, 0.5);
      row.min_epoch = sorted.front();
      row.max_epoch = sorted.back();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

BoxStats box_stats(const std::string& group, std::vector<double> values) {
  if (values.empty()) throw AnalysisError("box_stats: empty group '" + group + "'");
  std::sort(values.begin(), values.end());

  BoxStats box;
  box.group = group;
  box.min = values.front();
  box.max = values.back();
  box.q1 = quantile_sorted(values, 0.25);
  box.median = quantile_sorted(values, 0.5);
  box.q3 = quantile_sorted(values, 0.75);
  const double iqr = box.q3 - box.q1;
  const double lo_fence = box.q1 - 1.5 * iqr;
  const double hi_fence = box.q3 + 1.5 * iqr;
  box.whisker_low = box.q3;
  box.whisker_high = box.q1;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      box.outliers.push_back(v);
    } else {
      box.whisker_low = std::min(box.whisker_low, v);
      box.whisker_high = std::max(box.whisker_high, v);
    }
  }
  return box;
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_summary_csv(const std::string& path, const std::vector<GroupSummary>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_summary_csv: cannot open " + path);
  out << "group,n,grok_rate,mean_epoch,median_epoch,min,max\n";
  for (const GroupSummary& r : rows) {
    out << r.group << "," << r.n << "," << fmt(r.grok_rate) << "," << fmt(r.mean_epoch) << ","
        << fmt(r.median_epoch) << "," << fmt(r.min_epoch) << "," << fmt(r.max_epoch) << "\n";
  }
}

void write_boxplot_csv(const std::string& path, const std::vector<BoxStats>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_boxplot_csv: cannot open " + path);
  out << "group,min,q1,median,q3,max,outliers\n";
  for (const BoxStats& r : rows) {
    out << r.group << "," << fmt(r.min) << "," << fmt(r.q1) << "," << fmt(r.median) << ","
        << fmt(r.q3) << "," << fmt(r.max) << ",";
    for (std::size_t i = 0; i < r.outliers.size(); ++i) {
      if (i) out << ";";
      out << fmt(r.outliers[i]);
    }
    out << "\n";
  }
}

void write_boxplot_svg(const std::string& path, const std::vector<BoxStats>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_boxplot_svg: cannot open " + path);

  const int box_w = 60;
  const int slot_w = 120;
  const int margin_left = 70, margin_top = 30, margin_bottom = 50;
  const int plot_h = 280;
  const int width = margin_left + slot_w * std::max<std::size_t>(1, rows.size()) + 30;
  const int height = margin_top + plot_h + margin_bottom;

  double lo = 0.0, hi = 1.0;
  if (!rows.empty()) {
    lo = rows[0].min;
    hi = rows[0].max;
    for (const BoxStats& r : rows) {
      lo = std::min(lo, r.min);
      hi = std::max(hi, r.max);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto y_of = [&](double v) {
    return margin_top + plot_h * (hi - v) / (hi - lo);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  // y axis with 5 ticks
  out << "  <line x1=\"" << margin_left << "\" y1=\"" << margin_top << "\" x2=\"" << margin_left
      << "\" y2=\"" << margin_top + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = y_of(v);
    out << "  <line x1=\"" << margin_left - 5 << "\" y1=\"" << y << "\" x2=\"" << margin_left
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << margin_left - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(v)
        << "</text>\n";
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BoxStats& r = rows[i];
    const double cx = margin_left + slot_w * (static_cast<double>(i) + 0.5);
    const double x0 = cx - box_w / 2.0, x1 = cx + box_w / 2.0;
    // whiskers
    out << "  <line x1=\"" << cx << "\" y1=\"" << y_of(r.whisker_low) << "\" x2=\"" << cx
        << "\" y2=\"" << y_of(r.q1) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << cx << "\" y1=\"" << y_of(r.q3) << "\" x2=\"" << cx << "\" y2=\""
        << y_of(r.whisker_high) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << cx - 15 << "\" y1=\"" << y_of(r.whisker_low) << "\" x2=\"" << cx + 15
        << "\" y2=\"" << y_of(r.whisker_low) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << cx - 15 << "\" y1=\"" << y_of(r.whisker_high) << "\" x2=\"" << cx + 15
        << "\" y2=\"" << y_of(r.whisker_high) << "\" stroke=\"black\"/>\n";
    // box and median
    out << "  <rect x=\"" << x0 << "\" y=\"" << y_of(r.q3) << "\" width=\"" << box_w
        << "\" height=\"" << y_of(r.q1) - y_of(r.q3)
        << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << x0 << "\" y1=\"" << y_of(r.median) << "\" x2=\"" << x1 << "\" y2=\""
        << y_of(r.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (double o : r.outliers) {
      out << "  <circle cx=\"" << cx << "\" cy=\"" << y_of(o)
          << "\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n";
    }
    out << "  <text x=\"" << cx << "\" y=\"" << margin_top + plot_h + 20
        << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">" << r.group
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace groklab
