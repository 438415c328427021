#include "abss/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "abss/error.hpp"

namespace abss {
namespace {

constexpr int kMaxIterations = 500;
constexpr double kEpsilon = 1e-15;
constexpr double kTiny = 1e-300;

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEpsilon) return h;
  }
  fail(ErrorKind::Internal, "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::Usage, "incomplete beta needs a, b > 0");
  if (x < 0.0 || x > 1.0 || std::isnan(x)) fail(ErrorKind::Usage, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) fail(ErrorKind::Usage, "degrees of freedom must be > 0");
  if (std::isnan(t)) fail(ErrorKind::Usage, "t is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::Usage, "paired samples must have equal lengths");
  const std::size_t n = a.size();
  if (n < 2) fail(ErrorKind::Usage, "paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) fail(ErrorKind::Usage, "paired samples must be finite");
    d[i] = a[i] - b[i];
  }
  if (std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); })) {
    fail(ErrorKind::Degenerate, "all paired differences are identical (zero variance)");
  }
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) fail(ErrorKind::Degenerate, "paired differences have zero variance");

  TTestResult r;
  r.df = static_cast<int>(n - 1);
  r.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = r.df;
  r.p_two_sided = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + r.t_statistic * r.t_statistic));
  r.p_two_sided = std::clamp(r.p_two_sided, 0.0, 1.0);
  return r;
}

std::optional<std::string> format_p_value(double p) {
  if (p < 1e-3) return std::string("<0.001");
  if (p > 0.15) return std::nullopt;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", p);
  return std::string(buf);
}

}  // namespace abss
