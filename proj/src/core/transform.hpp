#pragma once

#include <span>
#include <vector>

namespace mlmcmc {

/// Parameters of the floored Gamma-approximation transform.
struct GammaTransformParams {
  double scale = 0.4;         // μ
  double shape = 2.5;         // κ
  double floor_weight = 0.1;  // φ

  void validate() const;

  friend bool operator==(const GammaTransformParams&, const GammaTransformParams&) = default;
};

/// a_φ(g) = φ e^g / (1 + e^g) + μ γ^{-1}[κ, Γ(κ)/2 (1 + erf(g/√2))].
///
/// The lower incomplete gamma inverse is evaluated as the regularized
/// P^{-1}(κ, Φ(g)); for g > 0 the upper-tail form Q^{-1}(κ, Φ(-g)) is used so
/// that large positive g keeps full precision. g = -inf maps to 0, +inf to +inf.
double gamma_transform(double g, const GammaTransformParams& p);

std::vector<double> transform_field(std::span<const double> g_values, const GammaTransformParams& p);

void transform_field_into(std::span<const double> g_values, const GammaTransformParams& p, std::span<double> out);

/// Numerically stable e^g / (1 + e^g).
double logistic(double g);

}  // namespace mlmcmc
