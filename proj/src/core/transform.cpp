#include "core/transform.hpp"

#include "core/error.hpp"
#include "core/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace mlmcmc {

void GammaTransformParams::validate() const {
  if (!(scale > 0.0)) fail(ErrorCode::Config, "transform scale must be positive");
  if (!(shape > 0.0)) fail(ErrorCode::Config, "transform shape must be positive");
  if (!(floor_weight > 0.0)) fail(ErrorCode::Config, "transform floor weight must be positive");
}

namespace {

// Cubic Hermite table of log P^{-1}(κ, Φ(g)) on a uniform g grid. It only
// supplies the starting value of the Halley iteration, so one polishing
// evaluation of the incomplete gamma function replaces the three or four
// needed from the Wilson-Hilferty start; the result keeps full precision.
class QuantileStart {
 public:
  static constexpr double kLow = -8.0, kHigh = 8.0, kStepsPerUnit = 32.0;

  explicit QuantileStart(double shape) : shape_(shape), lgamma_(std::lgamma(shape)) {
    const int n = static_cast<int>((kHigh - kLow) * kStepsPerUnit) + 1;
    log_x_.resize(n);
    slope_.resize(n);
    valid_ = true;
    for (int k = 0; k < n; ++k) {
      const double g = kLow + k / kStepsPerUnit;
      const double x = special::gamma_p_inv(shape, special::normal_cdf(g), special::normal_sf(g), g);
      // d log x / dg = φ(g) / (x f_κ(x)).
      const double phi = std::exp(-0.5 * g * g) / std::sqrt(2.0 * std::numbers::pi);
      const double density = special::gamma_pdf(shape, x);
      log_x_[k] = std::log(x);
      slope_[k] = phi / (x * density);
      if (!(x > 1e-100) || !std::isfinite(log_x_[k]) || !std::isfinite(slope_[k])) valid_ = false;
    }
  }

  double shape() const { return shape_; }
  double lgamma_shape() const { return lgamma_; }
  bool covers(double g) const { return valid_ && g >= kLow && g <= kHigh; }

  double operator()(double g) const {
    const double t = (g - kLow) * kStepsPerUnit;
    const int k = std::min(static_cast<int>(t), static_cast<int>(log_x_.size()) - 2);
    const double s = t - k, h = 1.0 / kStepsPerUnit;
    const double s2 = s * s, s3 = s2 * s;
    const double v = (2 * s3 - 3 * s2 + 1) * log_x_[k] + (s3 - 2 * s2 + s) * h * slope_[k] +
                     (-2 * s3 + 3 * s2) * log_x_[k + 1] + (s3 - s2) * h * slope_[k + 1];
    return std::exp(v);
  }

 private:
  double shape_, lgamma_;
  bool valid_ = false;
  std::vector<double> log_x_, slope_;
};

// One table per thread, rebuilt when the shape changes (it costs about as
// much as 500 transforms), so no locking is needed on the hot path.
const QuantileStart& quantile_start(double shape) {
  thread_local std::unique_ptr<QuantileStart> table;
  if (!table || table->shape() != shape) table = std::make_unique<QuantileStart>(shape);
  return *table;
}

}  // namespace

double logistic(double g) {
  if (g >= 0.0) return 1.0 / (1.0 + std::exp(-g));
  const double e = std::exp(g);
  return e / (1.0 + e);
}

double gamma_transform(double g, const GammaTransformParams& p) {
  if (std::isnan(g)) fail(ErrorCode::Numerical, "gamma_transform: NaN input");
  if (g == -std::numeric_limits<double>::infinity()) return 0.0;
  if (g == std::numeric_limits<double>::infinity()) return g;
  const double lower = special::normal_cdf(g);
  const double upper = special::normal_sf(g);
  // Beyond g ~ 38 the upper normal tail underflows; invert in log space there.
  double quantile;
  if (const QuantileStart& start = quantile_start(p.shape); start.covers(g)) {
    quantile = special::gamma_p_inv_from(p.shape, start.lgamma_shape(), lower, upper, start(g));
  } else if (upper > 0.0 || g < 0.0) {
    quantile = special::gamma_p_inv(p.shape, lower, upper, g);
  } else {
    quantile = special::gamma_q_inv_log(p.shape, special::log_normal_sf(g));
  }
  return p.floor_weight * logistic(g) + p.scale * quantile;
}

void transform_field_into(std::span<const double> g_values, const GammaTransformParams& p, std::span<double> out) {
  require(out.size() == g_values.size(), "transform_field: output size mismatch");
  for (std::size_t i = 0; i < g_values.size(); ++i) out[i] = gamma_transform(g_values[i], p);
}

std::vector<double> transform_field(std::span<const double> g_values, const GammaTransformParams& p) {
  std::vector<double> out(g_values.size());
  transform_field_into(g_values, p, out);
  return out;
}

}  // namespace mlmcmc
