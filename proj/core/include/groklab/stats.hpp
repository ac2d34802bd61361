// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "groklab/errors.hpp"

namespace groklab {

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;  // two-sided
  double mean_a = 0.0;
  double mean_b = 0.0;
  int n_a = 0;
  int n_b = 0;
};

/// One-sided tail P(T > t) of the central t-distribution with df degrees of
/// freedom, via the regularized incomplete beta function evaluated with a
/// continued fraction (modified Lentz); absolute error < 1e-12.
double t_survival(double t, double df);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double x, double a, double b);

/// Welch's unequal-variance two-sample t-test with Welch-Satterthwaite
/// degrees of freedom and a two-sided p-value. Requires >= 2 values per
/// sample and nonzero combined variance.
TTestResult welch_t_test(std::span<const double> sample_a, std::span<const double> sample_b);

/// Pooled-variance Student's t-test (alternative convention, flag-exposed).
TTestResult pooled_t_test(std::span<const double> sample_a, std::span<const double> sample_b);

/// Quantile by linear interpolation at rank h = (n+1)p clamped to [1, n]
/// (the exclusive / "(n+1)p" convention; quartiles of 1..9 give Q1 = 2.5).
/// Input must be sorted ascending.
double quantile_sorted(std::span<const double> sorted, double p);

struct GroupSummary {
  std::string group;
  int n = 0;              // runs in the group
  double grok_rate = 0.0;
  // statistics over grokked runs only; NaN when none grokked
  double mean_epoch = 0.0;
  double median_epoch = 0.0;
  double min_epoch = 0.0;
  double max_epoch = 0.0;
};

/// One labelled sample of grok epochs (grokked runs only) plus the total run
/// count of the group, the unit summarize() and boxplots work on.
struct GroupSample {
  std::string group;
  std::vector<double> epochs;  // grokked runs
  int total_runs = 0;
};

std::vector<GroupSummary> summarize(const std::vector<GroupSample>& groups);

struct BoxStats {
  std::string group;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;  // most extreme non-outliers
  std::vector<double> outliers;                  // beyond 1.5 * IQR
};

/// Five-number summary with Tukey outliers; throws AnalysisError on an empty
/// sample.
BoxStats box_stats(const std::string& group, std::vector<double> values);

void write_summary_csv(const std::string& path, const std::vector<GroupSummary>& rows);
void write_boxplot_csv(const std::string& path, const std::vector<BoxStats>& rows);

/// Minimal static vector graphic (SVG rectangles/lines/text, no plotting
/// dependency): one box per group with whiskers and outlier circles.
void write_boxplot_svg(const std::string& path, const std::vector<BoxStats>& rows);

}  // namespace groklab
