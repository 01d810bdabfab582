#pragma once

// Independent reference computations used only by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "pmsop/core_model.hpp"
#include "pmsop/lp_simplex.hpp"
#include "pmsop/moreau.hpp"
#include "pmsop/scenario.hpp"

namespace pmsop::testing {

/// Random LP with every variable boxed in [-1, 1] (occasionally wider) and
/// coefficients drawn from [-1, 1].
inline LinearProgram random_lp(std::mt19937_64& rng, int max_vars = 6, int max_rows = 6) {
  std::uniform_int_distribution<int> nv(1, max_vars), nr(1, max_rows), sense(0, 5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), widen(0.0, 1.0);
  LinearProgram lp;
  const int n = nv(rng), m = nr(rng);
  for (int j = 0; j < n; ++j) {
    const bool wide = widen(rng) < 0.2;
    lp.add_variable(wide ? -1.0 - widen(rng) : -1.0, wide ? 1.0 + widen(rng) : 1.0, unit(rng));
  }
  for (int i = 0; i < m; ++i) {
    std::vector<std::pair<int, double>> terms;
    for (int j = 0; j < n; ++j) terms.emplace_back(j, unit(rng));
    const int s = sense(rng);
    lp.add_row(std::move(terms), s < 3 ? RowSense::LessEqual : s < 5 ? RowSense::GreaterEqual : RowSense::Equal,
               unit(rng));
  }
  return lp;
}

namespace detail_oracle {

inline std::optional<std::vector<double>> solve_square(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < n; ++i)
      if (std::abs(A[i][c]) > std::abs(A[piv][c])) piv = i;
    if (std::abs(A[piv][c]) < 1e-10) return std::nullopt;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == c) continue;
      const double f = A[i][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[i][k] -= f * A[c][k];
      b[i] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / A[i][i];
  return x;
}

}  // namespace detail_oracle

/// Optimal objective of a bounded LP by enumerating every basic solution;
/// nullopt when no vertex is feasible.
inline std::optional<double> vertex_enumeration(const LinearProgram& lp, double tol = 1e-9) {
  const auto n = static_cast<std::size_t>(lp.num_vars());
  struct Plane {
    std::vector<double> a;
    double b;
  };
  std::vector<Plane> forced, optional;
  for (const auto& row : lp.rows) {
    Plane pl{std::vector<double>(n, 0.0), row.rhs};
    for (const auto& [j, c] : row.terms) pl.a[static_cast<std::size_t>(j)] += c;
    (row.sense == RowSense::Equal ? forced : optional).push_back(std::move(pl));
  }
  for (std::size_t j = 0; j < n; ++j) {
    Plane lo{std::vector<double>(n, 0.0), lp.lower[j]}, hi{std::vector<double>(n, 0.0), lp.upper[j]};
    lo.a[j] = hi.a[j] = 1.0;
    optional.push_back(lo);
    optional.push_back(hi);
  }
  if (forced.size() > n) {
    // Overdetermined equalities: enumerate n of them plus feasibility of the rest.
    optional.insert(optional.end(), forced.begin(), forced.end());
    forced.clear();
  }
  const std::size_t pick = n - forced.size();
  std::optional<double> best;
  std::vector<std::size_t> idx(pick);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
    if (depth == pick) {
      std::vector<std::vector<double>> A;
      std::vector<double> b;
      for (const auto& f : forced) {
        A.push_back(f.a);
        b.push_back(f.b);
      }
      for (std::size_t k : idx) {
        A.push_back(optional[k].a);
        b.push_back(optional[k].b);
      }
      const auto x = detail_oracle::solve_square(A, b);
      if (!x) return;
      for (std::size_t j = 0; j < n; ++j)
        if ((*x)[j] < lp.lower[j] - tol || (*x)[j] > lp.upper[j] + tol) return;
      for (const auto& row : lp.rows) {
        double ax = 0.0;
        for (const auto& [j, c] : row.terms) ax += c * (*x)[static_cast<std::size_t>(j)];
        if (row.sense == RowSense::LessEqual && ax > row.rhs + tol) return;
        if (row.sense == RowSense::GreaterEqual && ax < row.rhs - tol) return;
        if (row.sense == RowSense::Equal && std::abs(ax - row.rhs) > tol) return;
      }
      double obj = lp.cost_offset;
      for (std::size_t j = 0; j < n; ++j) obj += lp.cost[j] * (*x)[j];
      if (!best || obj < *best) best = obj;
      return;
    }
    for (std::size_t k = start; k < optional.size(); ++k) {
      idx[depth] = k;
      rec(k + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best;
}

/// Minimum of f over [lo, hi] on a uniform grid of step h.
inline std::pair<double, double> grid_minimize(const std::function<double(double)>& f, double lo, double hi,
                                               double h) {
  double best = std::numeric_limits<double>::infinity(), arg = lo;
  const auto n = static_cast<long>(std::llround((hi - lo) / h));
  for (long k = 0; k <= n; ++k) {
    const double q = lo + static_cast<double>(k) * h;
    const double v = f(q);
    if (v < best) {
      best = v;
      arg = q;
    }
  }
  return {best, arg};
}

/// Extensive-form value by recursion over the full scenario tree with
/// controls restricted to `controls` (no interpolation, no grid).
inline double scenario_tree_value(const Instance& inst, const NoiseModel& noise, const CommitmentProfile& p,
                                  const std::vector<double>& controls, int t, const State& x) {
  if (t == inst.horizon) return final_cost(inst, x);
  const auto& law = noise.stages[static_cast<std::size_t>(t)];
  double best = std::numeric_limits<double>::infinity();
  const Interval adm = admissible_interval(x.soc, inst.battery);
  for (double u : controls) {
    if (!adm.contains(u, 1e-12)) continue;
    double q = 0.0;
    for (std::size_t a = 0; a < law.size(); ++a) {
      const State next = state_step(inst, t, x, u, law.values[a]);
      q += law.probs[a] *
           (stage_cost(inst, t, x, u, law.values[a], p) +
            scenario_tree_value(inst, noise, p, controls, t + 1, {std::clamp(next.soc, 0.0, 1.0), next.gen}));
    }
    best = std::min(best, q);
  }
  return best;
}

/// Deterministic extensive-form LP over all stages with split charge and
/// discharge controls; returns its optimum.
inline double extensive_form_lp(const Instance& inst, const CommitmentProfile& p, const std::vector<double>& noise_path) {
  LinearProgram lp;
  const auto& b = inst.battery;
  double gen = inst.initial.gen;
  int soc_prev = lp.add_variable(inst.initial.soc, inst.initial.soc);
  for (int t = 0; t < inst.horizon; ++t) {
    const auto st = static_cast<std::size_t>(t);
    const double c = inst.tariff.price[st];
    const double a = penalty_slope(inst, t);
    const double g_raw = inst.ar1.alpha[st] * gen + inst.ar1.beta[st] + noise_path[st];
    const int uc = lp.add_variable(0.0, b.u_max);
    const int ud = lp.add_variable(0.0, -b.u_min);
    const int soc = lp.add_variable(0.0, 1.0);
    const int e = lp.add_variable(0.0, kInf, a);
    // Revenue -c dt (g - uc + ud).
    lp.cost[static_cast<std::size_t>(uc)] += c * b.dt;
    lp.cost[static_cast<std::size_t>(ud)] -= c * b.dt;
    lp.cost_offset -= c * b.dt * g_raw;
    lp.add_row({{soc, 1.0}, {soc_prev, -1.0}, {uc, -b.rho_c * b.dt / b.capacity}, {ud, b.dt / (b.rho_d * b.capacity)}},
               RowSense::Equal, 0.0);
    lp.add_row({{e, 1.0}, {uc, 1.0}, {ud, -1.0}}, RowSense::GreaterEqual, g_raw - p[st]);
    lp.add_row({{e, 1.0}, {uc, -1.0}, {ud, 1.0}}, RowSense::GreaterEqual, p[st] - g_raw);
    soc_prev = soc;
    gen = g_raw;
  }
  lp.cost[static_cast<std::size_t>(soc_prev)] -= inst.tariff.price[static_cast<std::size_t>(inst.horizon)] * b.capacity;
  const auto sol = solve(lp);
  return sol.objective;
}

}  // namespace pmsop::testing
