#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pmsop/core_model.hpp"

namespace pmsop {

/// Convex piecewise-linear function on the whole real line.
///
/// slopes[i] holds on (breakpoints[i-1], breakpoints[i]); slopes[0] to the left
/// of the first breakpoint and slopes.back() to the right of the last one.
/// `anchor_value` is f at the first breakpoint, or f(0) when there is none.
class ScalarPLConvex {
 public:
  ScalarPLConvex() : slopes_{0.0} {}

  ScalarPLConvex(std::vector<double> breakpoints, std::vector<double> slopes, double anchor_value)
      : breaks_(std::move(breakpoints)), slopes_(std::move(slopes)), anchor_(anchor_value) {
    if (slopes_.size() != breaks_.size() + 1) throw std::invalid_argument("need one more slope than breakpoints");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i - 1] < breaks_[i])) throw std::invalid_argument("breakpoints must increase strictly");
    for (std::size_t i = 1; i < slopes_.size(); ++i)
      if (!(slopes_[i - 1] <= slopes_[i])) throw std::invalid_argument("slopes must be nondecreasing");
    for (double v : breaks_) detail::require_finite(v, "breakpoint");
    for (double v : slopes_) detail::require_finite(v, "slope");
    detail::require_finite(anchor_, "anchor value");
  }

  /// c + a|q - k|.
  static ScalarPLConvex abs_kink(double kink, double a, double c = 0.0) { return {{kink}, {-a, a}, c}; }

  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<double>& slopes() const { return slopes_; }

  double max_abs_slope() const { return std::max(std::abs(slopes_.front()), std::abs(slopes_.back())); }

  double operator()(double q) const {
    if (breaks_.empty()) return anchor_ + slopes_[0] * q;
    if (q <= breaks_[0]) return anchor_ + slopes_[0] * (q - breaks_[0]);
    double v = anchor_;
    std::size_t i = 0;
    for (; i + 1 < breaks_.size() && q > breaks_[i + 1]; ++i) v += slopes_[i + 1] * (breaks_[i + 1] - breaks_[i]);
    return v + slopes_[i + 1] * (q - breaks_[i]);
  }

 private:
  std::vector<double> breaks_;
  std::vector<double> slopes_;
  double anchor_ = 0.0;
};

struct EnvelopeResult {
  double value = 0.0;
  double prox = 0.0;
  double gradient = 0.0;
};

namespace detail {

inline void require_positive_mu(double mu) {
  if (!(mu > 0) || !std::isfinite(mu)) throw std::invalid_argument("regularization coefficient must be positive");
}

}  // namespace detail

/// argmin_q f(q) + (p - q)^2 / (2 mu), by inverting q -> q + mu * df(q) exactly.
inline double prox_pl(const ScalarPLConvex& f, double mu, double p) {
  detail::require_positive_mu(mu);
  const auto& b = f.breakpoints();
  const auto& s = f.slopes();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (p < b[i] + mu * s[i]) return p - mu * s[i];
    if (p <= b[i] + mu * s[i + 1]) return b[i];
  }
  return p - mu * s.back();
}

inline EnvelopeResult moreau_envelope(const ScalarPLConvex& f, double mu, double p) {
  const double q = prox_pl(f, mu, p);
  return {f(q) + (p - q) * (p - q) / (2.0 * mu), q, (p - q) / mu};
}

inline double envelope_value(const ScalarPLConvex& f, double mu, double p) { return moreau_envelope(f, mu, p).value; }

inline double envelope_grad(const ScalarPLConvex& f, double mu, double p) { return moreau_envelope(f, mu, p).gradient; }

/// Section q -> L_t(x, u, w, p with p_t := q), an absolute-value kink at the delivery.
inline ScalarPLConvex stage_cost_section(const Instance& inst, int t, double delivery) {
  const double c = inst.tariff.price[static_cast<std::size_t>(t)];
  return ScalarPLConvex::abs_kink(delivery, penalty_slope(inst, t), -c * inst.battery.dt * delivery);
}

struct CostAndGrad {
  double value = 0.0;
  double grad_t = 0.0;  // the only nonzero coordinate of the p-gradient
};

/// Moreau-regularized stage cost; the envelope in R^T reduces to the scalar
/// envelope of the section in p_t because the cost ignores every other coordinate.
inline CostAndGrad regularized_stage_cost_from_delivery(const Instance& inst, int t, double delivery,
                                                        double committed, double mu) {
  detail::require_positive_mu(mu);
  const double c = inst.tariff.price[static_cast<std::size_t>(t)];
  const double energy = -c * inst.battery.dt * delivery;
  const double a = penalty_slope(inst, t);
  // Huber form of the envelope of a|q - d|; identical to moreau_envelope on the section.
  const double r = committed - delivery;
  if (std::abs(r) <= mu * a) return {energy + r * r / (2.0 * mu), r / mu};
  return {energy + a * std::abs(r) - mu * a * a / 2.0, r > 0 ? a : -a};
}

inline CostAndGrad regularized_stage_cost(const Instance& inst, int t, const State& x, double u, double w,
                                          const CommitmentProfile& p, double mu) {
  if (t < 0 || t >= inst.horizon) throw std::out_of_range("stage index out of range");
  return regularized_stage_cost_from_delivery(inst, t, stage_delivery(inst, t, x, u, w),
                                              p[static_cast<std::size_t>(t)], mu);
}

}  // namespace pmsop
