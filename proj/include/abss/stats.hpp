#pragma once

#include <optional>
#include <span>
#include <string>

namespace abss {

/// I_x(a, b), evaluated with the modified-Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double t_statistic = 0.0;
  double p_two_sided = 1.0;
  int df = 0;
};

/// Paired t-test on d = a - b. Needs n >= 2 and non-constant differences.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Report formatting: "<0.001" below 1e-3, omitted (nullopt) above 0.15,
/// otherwise three decimals.
std::optional<std::string> format_p_value(double p);

}  // namespace abss
