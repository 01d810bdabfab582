#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmsop {

/// Committed power per stage (MW). Feasible iff every entry lies in [0, q̄].
using CommitmentProfile = std::vector<double>;

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + " is not finite");
}

}  // namespace detail

/// Lithium-ion battery and plant description. Powers in MW, capacity in MWh,
/// step length in hours.
struct BatteryParams {
  double capacity = 1.0;
  double u_min = -1.0;
  double u_max = 1.0;
  double rho_c = 0.95;
  double rho_d = 0.95;
  double dt = 0.5;
  double peak = 1.0;

  void validate() const {
    if (!(capacity > 0)) throw std::invalid_argument("battery capacity must be positive");
    if (!(u_min < 0 && 0 < u_max)) throw std::invalid_argument("battery bounds must satisfy u_min < 0 < u_max");
    if (!(rho_c > 0 && rho_c <= 1 && rho_d > 0 && rho_d <= 1))
      throw std::invalid_argument("battery efficiencies must lie in (0, 1]");
    if (!(dt > 0)) throw std::invalid_argument("step length must be positive");
    if (!(peak > 0)) throw std::invalid_argument("peak power must be positive");
  }
};

/// Energy prices c_0..c_T (c_T prices the stored energy left at the end of the
/// day) and the penalty coefficient applied to deviations from the commitment.
struct TariffSchedule {
  std::vector<double> price;
  double penalty = 2.0;
  int peak_begin = 0;  // first on-peak stage
  int peak_end = 0;    // one past the last on-peak stage

  /// Two-level day tariff over `horizon` slots of `dt` hours; the on-peak window
  /// is given in clock hours, e.g. [19, 21).
  static TariffSchedule two_level(int horizon, double dt, double off_peak, double on_peak,
                                  double peak_start_hour, double peak_end_hour, double penalty) {
    TariffSchedule tariff;
    tariff.penalty = penalty;
    tariff.peak_begin = static_cast<int>(std::lround(peak_start_hour / dt));
    tariff.peak_end = static_cast<int>(std::lround(peak_end_hour / dt));
    tariff.price.assign(static_cast<std::size_t>(horizon) + 1, off_peak);
    for (int t = std::max(0, tariff.peak_begin); t < std::min(horizon + 1, tariff.peak_end); ++t)
      tariff.price[static_cast<std::size_t>(t)] = on_peak;
    return tariff;
  }

  double max_price() const { return *std::max_element(price.begin(), price.end()); }

  void validate(int horizon) const {
    if (price.size() != static_cast<std::size_t>(horizon) + 1)
      throw std::invalid_argument("tariff needs horizon + 1 prices");
    for (double c : price)
      if (!(c > 0) || !std::isfinite(c)) throw std::invalid_argument("prices must be positive and finite");
    if (!(penalty >= 1)) throw std::invalid_argument("penalty coefficient must be >= 1");
  }
};

/// Per-stage AR(1) weights of the generated power: gen' = alpha_t * gen + beta_t + w.
struct AR1Weights {
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t size() const { return alpha.size(); }
};

struct State {
  double soc = 0.0;  // fraction of capacity
  double gen = 0.0;  // MW

  friend bool operator==(const State&, const State&) = default;
};

/// Closed interval of admissible scalar controls.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

/// Day-ahead solar plant with a battery: state (soc, gen), scalar control u,
/// parameter p in R^T entering only the stage costs.
struct Instance {
  int horizon = 48;
  BatteryParams battery;
  TariffSchedule tariff;
  AR1Weights ar1;
  State initial;
  std::vector<double> param_lo;
  std::vector<double> param_hi;

  static constexpr int state_dim = 2;
  static constexpr int control_dim = 1;
  int param_dim() const { return horizon; }

  /// Fills the parameter box with [0, q̄]^T.
  void default_parameter_box() {
    param_lo.assign(static_cast<std::size_t>(horizon), 0.0);
    param_hi.assign(static_cast<std::size_t>(horizon), battery.peak);
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    battery.validate();
    tariff.validate(horizon);
    const auto T = static_cast<std::size_t>(horizon);
    if (ar1.alpha.size() != T || ar1.beta.size() != T)
      throw std::invalid_argument("AR(1) weights must have length T");
    for (std::size_t t = 0; t < T; ++t) {
      detail::require_finite(ar1.alpha[t], "alpha");
      detail::require_finite(ar1.beta[t], "beta");
    }
    if (param_lo.size() != T || param_hi.size() != T)
      throw std::invalid_argument("parameter box must have length T");
    for (std::size_t t = 0; t < T; ++t)
      if (!(param_lo[t] <= param_hi[t])) throw std::invalid_argument("parameter box lower > upper");
    if (!(initial.soc >= 0 && initial.soc <= 1)) throw std::invalid_argument("initial soc outside [0, 1]");
  }
};

/// Battery state-of-charge transition, exact nonsmooth efficiency model. No clamping.
inline double battery_step(double soc, double u, const BatteryParams& b) {
  detail::require_finite(soc, "soc");
  detail::require_finite(u, "control");
  const double charge = std::max(u, 0.0);
  const double discharge = std::max(-u, 0.0);
  return soc + (b.rho_c * charge - discharge / b.rho_d) * b.dt / b.capacity;
}

/// Generated power before projection onto [0, q̄].
inline double raw_generation(const Instance& inst, int t, double gen, double w) {
  const auto s = static_cast<std::size_t>(t);
  return inst.ar1.alpha[s] * gen + inst.ar1.beta[s] + w;
}

/// Full transition; the generated-power component is projected onto [0, q̄].
inline State state_step(const Instance& inst, int t, const State& x, double u, double w) {
  if (t < 0 || t >= inst.horizon) throw std::out_of_range("stage index out of range");
  const double gen = raw_generation(inst, t, x.gen, w);
  detail::require_finite(gen, "generated power");
  return {battery_step(x.soc, u, inst.battery), std::clamp(gen, 0.0, inst.battery.peak)};
}

/// Controls keeping both the power box and the next soc inside [0, 1]. Always contains 0.
inline Interval admissible_interval(double soc, const BatteryParams& b) {
  if (!(soc >= 0 && soc <= 1)) throw std::domain_error("soc outside [0, 1]");
  const double lo = std::max(b.u_min, -soc * b.capacity * b.rho_d / b.dt);
  const double hi = std::min(b.u_max, (1.0 - soc) * b.capacity / (b.rho_c * b.dt));
  return {lo, hi};
}

inline double delivered_power(double gen_next, double u) { return gen_next - u; }

/// Delivered power over [t, t+1) computed from the unprojected generation.
inline double stage_delivery(const Instance& inst, int t, const State& x, double u, double w) {
  return delivered_power(raw_generation(inst, t, x.gen, w), u);
}

/// Energy revenue (negative cost) plus commitment deviation penalty.
inline double stage_cost_from_delivery(const Instance& inst, int t, double delivery, double committed) {
  const double c = inst.tariff.price[static_cast<std::size_t>(t)];
  const double dt = inst.battery.dt;
  return -c * dt * delivery + inst.tariff.penalty * c * dt * std::abs(delivery - committed);
}

inline double stage_cost(const Instance& inst, int t, const State& x, double u, double w,
                         const CommitmentProfile& p) {
  if (t < 0 || t >= inst.horizon) throw std::out_of_range("stage index out of range");
  return stage_cost_from_delivery(inst, t, stage_delivery(inst, t, x, u, w), p[static_cast<std::size_t>(t)]);
}

/// Slope of the penalty term a = lambda * c_t * dt.
inline double penalty_slope(const Instance& inst, int t) {
  return inst.tariff.penalty * inst.tariff.price[static_cast<std::size_t>(t)] * inst.battery.dt;
}

/// A subgradient of the stage cost in p_t (the only coordinate it depends on); 0 at the kink.
inline double stage_cost_subgradient(const Instance& inst, int t, double delivery, double committed) {
  const double r = committed - delivery;
  const double a = penalty_slope(inst, t);
  return r > 0 ? a : (r < 0 ? -a : 0.0);
}

/// Value of the energy left in the battery at the end of the horizon.
inline double final_cost(const Instance& inst, const State& x) {
  return -inst.tariff.price[static_cast<std::size_t>(inst.horizon)] * x.soc * inst.battery.capacity;
}

inline bool is_feasible(const CommitmentProfile& p, const Instance& inst) {
  if (p.size() != static_cast<std::size_t>(inst.horizon)) return false;
  for (std::size_t t = 0; t < p.size(); ++t)
    if (!(p[t] >= inst.param_lo[t] && p[t] <= inst.param_hi[t])) return false;
  return true;
}

}  // namespace pmsop
