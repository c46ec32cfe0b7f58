#pragma once

namespace mlmcmc::special {

double erf(double x);
double erfc(double x);
double log_gamma(double x);

/// Standard normal CDF and its complement, both accurate in the far tails.
double normal_cdf(double x);
double normal_sf(double x);

/// log(normal_sf(x)), finite far beyond the underflow of normal_sf.
double log_normal_sf(double x);

/// Inverse of the standard normal CDF (Acklam's rational approximation with one
/// Halley refinement step).
double normal_quantile(double p);

/// Regularized lower and upper incomplete gamma functions P(a, x), Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// x such that P(a, x) = p, with q = 1 - p supplied separately so that the
/// upper tail keeps full relative accuracy. Root-finding uses whichever of
/// P or Q is smaller; `z_hint` is a normal-score starting value (Wilson-Hilferty),
/// pass NaN to derive it from p.
double gamma_p_inv(double a, double p, double q, double z_hint);
double gamma_p_inv(double a, double p);

/// The same root, refined from a caller-supplied starting value `x0` (for
/// example an interpolated one) with `lgamma_a` = lgamma(a) precomputed.
/// The result does not depend on `x0` beyond rounding.
double gamma_p_inv_from(double a, double lgamma_a, double p, double q, double x0);

/// x such that log Q(a, x) = log_q, for upper-tail probabilities too small
/// to represent (log_q below about -700).
double gamma_q_inv_log(double a, double log_q);

/// Density of Gamma(a, 1).
double gamma_pdf(double a, double x);

}  // namespace mlmcmc::special
