#pragma once

// Small instances shared by the test suites.

#include <vector>

#include "pmsop/core_model.hpp"
#include "pmsop/scenario.hpp"

namespace pmsop::testing {

/// Four half-hour stages, one on-peak pair, generation that never leaves [0, 1].
inline Instance small_instance() {
  Instance inst;
  inst.horizon = 4;
  inst.tariff.price = {0.4, 0.6, 0.6, 0.4, 0.4};
  inst.tariff.penalty = 2.0;
  inst.ar1.alpha.assign(4, 0.5);
  inst.ar1.beta.assign(4, 0.25);
  inst.initial = {0.0, 0.0};
  inst.default_parameter_box();
  return inst;
}

inline NoiseModel small_noise() {
  NoiseModel m;
  m.stages.assign(4, DiscreteDistribution{{-0.2, 0.0, 0.2}, {0.25, 0.5, 0.25}});
  return m;
}

/// Lossless battery whose transitions map grid nodes to grid nodes for
/// controls in {-1, -0.5, 0, 0.5, 1}, a 5-point soc grid and a 5-point gen grid.
inline Instance grid_closed_instance() {
  Instance inst;
  inst.horizon = 3;
  inst.battery.rho_c = inst.battery.rho_d = 1.0;
  inst.tariff.price = {0.4, 0.6, 0.5, 0.45};
  inst.ar1.alpha.assign(3, 0.0);
  inst.ar1.beta.assign(3, 0.5);
  inst.initial = {0.5, 0.5};
  inst.default_parameter_box();
  return inst;
}

inline NoiseModel grid_closed_noise() {
  NoiseModel m;
  m.stages.assign(3, DiscreteDistribution{{-0.25, 0.25}, {0.5, 0.5}});
  return m;
}

inline NoiseModel single_atom(const NoiseModel& m) {
  NoiseModel d;
  for (const auto& s : m.stages) d.stages.push_back(DiscreteDistribution{{s.mean()}, {1.0}});
  return d;
}

inline std::vector<double> mean_path(const NoiseModel& m) {
  std::vector<double> w;
  for (const auto& s : m.stages) w.push_back(s.mean());
  return w;
}

}  // namespace pmsop::testing
