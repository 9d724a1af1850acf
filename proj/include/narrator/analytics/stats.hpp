#pragma once

#include <optional>
#include <span>
#include <vector>

namespace narrator::analytics {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-tailed p-value of a Student t statistic with `df` degrees of freedom.
double student_t_two_tailed(double t, double df);
/// Upper-tail P(T <= t) for Student's t.
double student_t_cdf(double t, double df);
/// Upper-tail probability P(F > f) for the F distribution.
double f_survival(double f, double df1, double df2);

struct Descriptive {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;  // sample SD; absent for n == 1
  double min = 0.0;
  double max = 0.0;
};

Descriptive descriptive(std::span<const double> samples);

struct GroupStats {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> sd;
};

struct StatTestResult {
  double statistic = 0.0;
  std::vector<double> df;  // {df} for t, {df_between, df_within} for F
  double p_value = 1.0;
  std::vector<GroupStats> group_stats;
  bool infinite_statistic = false;
};

/// Two-tailed Welch t-test with Welch-Satterthwaite degrees of freedom.
StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

StatTestResult one_way_anova(const std::vector<std::vector<double>>& groups);

}  // namespace narrator::analytics
