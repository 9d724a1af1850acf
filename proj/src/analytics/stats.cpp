#include "narrator/analytics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "narrator/error.hpp"

namespace narrator::analytics {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sum_sq_dev(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s;
}

GroupStats group_stats(std::span<const double> v) {
  GroupStats g;
  g.n = v.size();
  g.mean = mean_of(v);
  if (v.size() > 1) g.sd = std::sqrt(sum_sq_dev(v, g.mean) / (v.size() - 1));
  return g;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw DomainError("incomplete_beta: a and b must be positive");
  if (x < 0.0 || x > 1.0 || std::isnan(x)) throw DomainError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fastest for x < (a + 1) / (a + b + 2).
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed(double t, double df) {
  if (!(df > 0)) throw DomainError("student_t: df must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
  const double tail = student_t_two_tailed(t, df) / 2.0;
  return t < 0 ? tail : 1.0 - tail;
}

double f_survival(double f, double df1, double df2) {
  if (!(df1 > 0) || !(df2 > 0)) throw DomainError("f_survival: df must be positive");
  if (std::isinf(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  return std::clamp(incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)), 0.0, 1.0);
}

Descriptive descriptive(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("descriptive: empty sample");
  Descriptive d;
  d.n = samples.size();
  d.mean = mean_of(samples);
  if (d.n > 1) d.sd = std::sqrt(sum_sq_dev(samples, d.mean) / (d.n - 1));
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  d.min = *lo;
  d.max = *hi;
  return d;
}

StatTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("welch_t_test: each sample needs n >= 2");
  const GroupStats ga = group_stats(a);
  const GroupStats gb = group_stats(b);
  const double va = *ga.sd * *ga.sd / ga.n;
  const double vb = *gb.sd * *gb.sd / gb.n;
  if (!(va + vb > 0)) throw DomainError("welch_t_test: zero variance in both samples");

  StatTestResult r;
  r.statistic = (ga.mean - gb.mean) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (ga.n - 1) + vb * vb / (gb.n - 1));
  r.df = {df};
  r.p_value = student_t_two_tailed(r.statistic, df);
  r.group_stats = {ga, gb};
  return r;
}

StatTestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw ValidationError("one_way_anova: need at least 2 groups");
  std::size_t total_n = 0;
  double grand_sum = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw ValidationError("one_way_anova: empty group");
    total_n += g.size();
    grand_sum += std::accumulate(g.begin(), g.end(), 0.0);
  }
  const std::size_t k = groups.size();
  if (total_n <= k) throw ValidationError("one_way_anova: need more observations than groups");
  const double grand_mean = grand_sum / total_n;

  StatTestResult r;
  double ssb = 0.0;
  double ssw = 0.0;
  for (const auto& g : groups) {
    GroupStats gs = group_stats(g);
    ssb += g.size() * (gs.mean - grand_mean) * (gs.mean - grand_mean);
    ssw += sum_sq_dev(g, gs.mean);
    r.group_stats.push_back(gs);
  }
  const double df_between = static_cast<double>(k - 1);
  const double df_within = static_cast<double>(total_n - k);
  r.df = {df_between, df_within};
  if (ssw == 0.0) {
    if (ssb == 0.0) throw DomainError("one_way_anova: all observations identical");
    r.statistic = std::numeric_limits<double>::infinity();
    r.infinite_statistic = true;
    r.p_value = 0.0;
    return r;
  }
  r.statistic = (ssb / df_between) / (ssw / df_within);
  r.p_value = f_survival(r.statistic, df_between, df_within);
  return r;
}

}  // namespace narrator::analytics
