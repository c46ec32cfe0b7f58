#include "core/special_functions.hpp"

#include "core/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace mlmcmc::special {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;
constexpr double kInf = std::numeric_limits<double>::infinity();

// log(x^a e^-x / Γ(a)) with log Γ(a) supplied.
double log_prefactor(double a, double x, double lg) { return a * std::log(x) - x - lg; }

// Σ of the series for P(a, x) without the prefactor; valid for x < a + 1.
double p_series_sum(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps * 0.25) break;
  }
  return sum;
}

// Modified Lentz continued fraction for Q(a, x) without the prefactor; valid
// for x >= a + 1.
double q_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps * 0.25) break;
  }
  return h;
}

// P(a, x) or Q(a, x) (whichever `lower` selects) together with the density
// of Gamma(a, 1) at x, sharing one exp/log evaluation.
struct GammaTail {
  double tail;
  double density;
};

GammaTail gamma_tail(double a, double x, double lg, bool lower) {
  const double pre = std::exp(log_prefactor(a, x, lg));
  double p_or_q;
  if (x < a + 1.0) {
    const double p = pre * p_series_sum(a, x);
    p_or_q = lower ? p : 1.0 - p;
  } else {
    const double q = pre * q_fraction(a, x);
    p_or_q = lower ? 1.0 - q : q;
  }
  return {p_or_q, pre / x};
}

double p_series(double a, double x) { return p_series_sum(a, x) * std::exp(log_prefactor(a, x, std::lgamma(a))); }

double q_continued_fraction(double a, double x) {
  return std::exp(log_prefactor(a, x, std::lgamma(a))) * q_fraction(a, x);
}

// Safeguarded Halley iteration on f(x) = P(a, x) - p (or q - Q(a, x)), which
// is increasing with f' = density and f''/f' = (a - 1)/x - 1. Convergence is
// cubic, so a relative step below 1e-8 leaves an error far below rounding.
double halley_inverse(double a, double lg, bool lower, double target, double x) {
  double lo = 0.0, hi = kInf;
  for (int it = 0; it < 400; ++it) {
    const GammaTail g = gamma_tail(a, x, lg, lower);
    const double f = lower ? g.tail - target : target - g.tail;
    if (f == 0.0) return x;
    if (f < 0.0) lo = x; else hi = x;

    double next = std::numeric_limits<double>::quiet_NaN();
    if (g.density > 0.0) {
      const double newton = f / g.density;
      const double curvature = (a - 1.0) / x - 1.0;
      const double denom = 1.0 - 0.5 * newton * curvature;
      next = (denom > 0.5) ? x - newton / denom : x - newton;
    }
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      if (hi == kInf) {
        next = 2.0 * x + 1.0;
      } else if (lo == 0.0) {
        next = 0.5 * hi;
      } else {
        next = std::sqrt(lo * hi);
      }
    } else if (std::abs(next - x) <= 1e-8 * x) {
      return next;
    }
    if (hi != kInf && (hi - lo) <= 2.0 * kEps * hi) return 0.5 * (lo + hi);
    x = next;
  }
  fail(ErrorCode::Numerical, "gamma_p_inv: root-find did not converge");
}

}  // namespace

double erf(double x) { return std::erf(x); }
double erfc(double x) { return std::erfc(x); }
double log_gamma(double x) { return std::lgamma(x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double log_normal_sf(double x) {
  if (x < 30.0) return std::log(normal_sf(x));
  // Asymptotic expansion of Mills' ratio; at x >= 30 six terms reach full precision.
  const double r = 1.0 / (x * x);
  double term = 1.0, series = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * r;
    series += term;
  }
  return -0.5 * x * x - std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double gamma_p(double a, double x) {
  require(a > 0.0, "gamma_p: shape must be positive");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (x == kInf) return 1.0;
  if (x < a + 1.0) return p_series(a, x);
  return 1.0 - q_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  require(a > 0.0, "gamma_q: shape must be positive");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 1.0;
  if (x == kInf) return 0.0;
  if (x < a + 1.0) return 1.0 - p_series(a, x);
  return q_continued_fraction(a, x);
}

double gamma_pdf(double a, double x) {
  if (x <= 0.0) return (x == 0.0 && a == 1.0) ? 1.0 : 0.0;
  return std::exp(log_prefactor(a, x, std::lgamma(a))) / x;
}

double gamma_p_inv(double a, double p, double q, double z_hint) {
  require(a > 0.0, "gamma_p_inv: shape must be positive");
  require(p >= 0.0 && q >= 0.0, "gamma_p_inv: probabilities must be nonnegative");
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kInf;

  const bool lower = p <= q;
  const double target = lower ? p : q;
  const double lg = std::lgamma(a);

  // Initial guess: Wilson-Hilferty, falling back to the small-x tail.
  if (std::isnan(z_hint)) z_hint = lower ? normal_quantile(p) : -normal_quantile(q);
  double x;
  {
    const double s = 1.0 / (9.0 * a);
    const double t = 1.0 - s + z_hint * std::sqrt(s);
    x = a * t * t * t;
    if (lower) {
      // P(a, x) = x^a / Γ(a + 1) (1 + O(x)); for tiny roots this is exact to
      // rounding, and it also covers roots below the double range.
      const double small = std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
      if (small < 1e-100) return small;
      if (!(x > 0.0) || small < 0.5 * x) x = (x > 0.0) ? std::min(x, small) : small;
    }
    if (!(x > 0.0) || !std::isfinite(x)) x = a;
  }

  return halley_inverse(a, lg, lower, target, x);
}

double gamma_p_inv_from(double a, double lgamma_a, double p, double q, double x0) {
  require(a > 0.0, "gamma_p_inv: shape must be positive");
  require(p >= 0.0 && q >= 0.0, "gamma_p_inv: probabilities must be nonnegative");
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kInf;
  if (!(x0 > 0.0) || !std::isfinite(x0)) return gamma_p_inv(a, p, q, std::numeric_limits<double>::quiet_NaN());
  const bool lower = p <= q;
  return halley_inverse(a, lgamma_a, lower, lower ? p : q, x0);
}

double gamma_q_inv_log(double a, double log_q) {
  if (!(a > 0.0) || !(log_q < 0.0)) fail(ErrorCode::InvalidArgument, "gamma_q_inv_log: need a > 0 and log_q < 0");
  const double lg = std::lgamma(a);
  const double t = -log_q;
  double x = std::max(a + 1.0, t + (a - 1.0) * std::log(std::max(t, 1.0)) - lg);
  // Newton on log Q; d/dx log Q = -1 / (x * fraction). The function is
  // concave here, so the iteration converges monotonically.
  for (int i = 0; i < 100; ++i) {
    const double fraction = q_fraction(a, x);
    const double h = log_prefactor(a, x, lg) + std::log(fraction) - log_q;
    const double step = h * x * fraction;
    x = std::max(a + 1.0, x + step);
    if (std::abs(step) <= 4.0 * kEps * x) break;
  }
  return x;
}

double gamma_p_inv(double a, double p) {
  require(p >= 0.0 && p <= 1.0, "gamma_p_inv: p must lie in [0, 1]");
  return gamma_p_inv(a, p, 1.0 - p, std::numeric_limits<double>::quiet_NaN());
}

}  // namespace mlmcmc::special
