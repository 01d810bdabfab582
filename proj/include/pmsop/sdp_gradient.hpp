#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "pmsop/core_model.hpp"
#include "pmsop/moreau.hpp"
#include "pmsop/parallel.hpp"
#include "pmsop/scenario.hpp"

namespace pmsop {

/// Uniform (soc, gen) grid on [0, 1] x [0, gen_max]. Node index = i_soc * n_gen + i_gen.
struct StateGrid {
  int n_soc = 6;
  int n_gen = 6;
  double gen_max = 1.0;

  std::size_t size() const { return static_cast<std::size_t>(n_soc) * static_cast<std::size_t>(n_gen); }
  double soc_step() const { return 1.0 / (n_soc - 1); }
  double gen_step() const { return gen_max / (n_gen - 1); }
  double soc(int i) const { return i == n_soc - 1 ? 1.0 : i * soc_step(); }
  double gen(int j) const { return j == n_gen - 1 ? gen_max : j * gen_step(); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_gen) + static_cast<std::size_t>(j);
  }
  State node(std::size_t k) const {
    return {soc(static_cast<int>(k / static_cast<std::size_t>(n_gen))),
            gen(static_cast<int>(k % static_cast<std::size_t>(n_gen)))};
  }

  void validate() const {
    if (n_soc < 2 || n_gen < 2) throw std::invalid_argument("state grid needs at least 2 points per axis");
    if (!(gen_max > 0)) throw std::invalid_argument("generation axis must have positive length");
  }

  /// Index of the node holding `x`, if `x` is a grid node.
  std::optional<std::size_t> find_node(const State& x, double tol = 1e-9) const {
    const double ps = x.soc / soc_step();
    const double pg = x.gen / gen_step();
    const double rs = std::round(ps), rg = std::round(pg);
    if (std::abs(ps - rs) > tol || std::abs(pg - rg) > tol) return std::nullopt;
    if (rs < 0 || rs >= n_soc || rg < 0 || rg >= n_gen) return std::nullopt;
    return index(static_cast<int>(rs), static_cast<int>(rg));
  }
};

/// Sorted control points; always contains 0.
struct ControlGrid {
  std::vector<double> points;

  /// n uniform points on [lo, hi]; 0 is inserted when it is not one of them.
  static ControlGrid uniform(int n, double lo, double hi) {
    if (n < 2) throw std::invalid_argument("control grid needs at least 2 points");
    if (!(lo < 0 && 0 < hi)) throw std::invalid_argument("control range must straddle 0");
    ControlGrid g;
    const double h = (hi - lo) / (n - 1);
    bool has_zero = false;
    for (int k = 0; k < n; ++k) {
      double u = k == n - 1 ? hi : lo + k * h;
      if (std::abs(u) < 1e-12 * (hi - lo)) {
        u = 0.0;
        has_zero = true;
      }
      g.points.push_back(u);
    }
    if (!has_zero) g.points.insert(std::upper_bound(g.points.begin(), g.points.end(), 0.0), 0.0);
    return g;
  }

  std::size_t size() const { return points.size(); }
};

/// Bilinear stencil: four node indices and weights.
struct Stencil {
  std::array<std::size_t, 4> node{};
  std::array<double, 4> weight{};
};

namespace detail {

struct AxisCell {
  int lo = 0;
  double frac = 0.0;
};

inline AxisCell locate(double x, double step, int n) {
  double pos = x / step;
  const double r = std::round(pos);
  if (std::abs(pos - r) < 1e-9) pos = r;
  int i = static_cast<int>(std::floor(pos));
  i = std::clamp(i, 0, n - 2);
  return {i, pos - i};
}

}  // namespace detail

/// Stencil of a point inside the grid box; throws outside it.
inline Stencil stencil(const StateGrid& grid, const State& x) {
  constexpr double tol = 1e-9;
  if (!(x.soc >= -tol && x.soc <= 1.0 + tol && x.gen >= -tol && x.gen <= grid.gen_max + tol))
    throw std::domain_error("interpolation point outside the grid box");
  const auto s = detail::locate(std::clamp(x.soc, 0.0, 1.0), grid.soc_step(), grid.n_soc);
  const auto g = detail::locate(std::clamp(x.gen, 0.0, grid.gen_max), grid.gen_step(), grid.n_gen);
  Stencil st;
  st.node = {grid.index(s.lo, g.lo), grid.index(s.lo, g.lo + 1), grid.index(s.lo + 1, g.lo),
             grid.index(s.lo + 1, g.lo + 1)};
  st.weight = {(1 - s.frac) * (1 - g.frac), (1 - s.frac) * g.frac, s.frac * (1 - g.frac), s.frac * g.frac};
  return st;
}

inline double bilinear_interp(const StateGrid& grid, std::span<const double> table, const State& x) {
  const Stencil st = stencil(grid, x);
  double v = 0.0;
  for (int k = 0; k < 4; ++k)
    if (st.weight[k] != 0.0) v += st.weight[k] * table[st.node[k]];
  return v;
}

/// Per-stage tables retained by backward_solve on request.
struct DPTables {
  std::vector<std::vector<double>> value;    // [t][node], t in [0, T]
  std::vector<std::vector<double>> grad;     // [t][node * T + s]
  std::vector<std::vector<double>> control;  // [t][node], t in [0, T-1]

  /// Writes "stage,soc,gen,control,value,grad_0..grad_{T-1}" rows.
  void write_csv(std::ostream& out, const StateGrid& grid) const {
    const std::size_t T = value.size() - 1;
    out << "stage,soc,gen,control,value";
    for (std::size_t s = 0; s < T; ++s) out << ",grad_" << s;
    out << '\n';
    for (std::size_t t = 0; t <= T; ++t)
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const State x = grid.node(k);
        out << t << ',' << x.soc << ',' << x.gen << ',' << (t < T ? control[t][k] : 0.0) << ',' << value[t][k];
        for (std::size_t s = 0; s < T; ++s) out << ',' << grad[t][k * T + s];
        out << '\n';
      }
  }
};

struct OracleResult {
  double value = 0.0;
  std::vector<double> gradient;
  std::optional<DPTables> tables;
  double seconds = 0.0;
};

struct DPOptions {
  std::optional<double> mu;  // Moreau regularization; nullopt = exact costs with subgradients
  bool keep_tables = false;
  unsigned threads = 1;
};

/// Grid dynamic programming for a fixed commitment profile.
///
/// At each node the admissible grid controls are enumerated; the next state is
/// projected onto the grid box and the value and p-gradient tables of the next
/// stage are bilinearly interpolated there. The smallest minimizing control
/// wins ties, and the gradient recursion is evaluated at that control.
inline OracleResult backward_solve(const Instance& inst, const NoiseModel& noise, const CommitmentProfile& p,
                                   const StateGrid& grid, const ControlGrid& controls, const DPOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  grid.validate();
  if (controls.size() < 2) throw std::invalid_argument("control grid needs at least 2 points");
  if (opt.mu) detail::require_positive_mu(*opt.mu);
  const int T = inst.horizon;
  const auto nT = static_cast<std::size_t>(T);
  if (p.size() != nT) throw std::invalid_argument("profile length must equal the horizon");
  for (double v : p) detail::require_finite(v, "profile entry");
  if (noise.horizon() != nT) throw std::invalid_argument("noise model horizon mismatch");
  const auto root = grid.find_node(inst.initial);
  if (!root) throw std::invalid_argument("initial state must be a grid node");

  const std::size_t N = grid.size();
  std::vector<double> value_next(N), value_cur(N);
  std::vector<double> grad_next(N * nT, 0.0), grad_cur(N * nT, 0.0);
  std::vector<double> control_cur(N);
  DPTables tables;
  if (opt.keep_tables) {
    tables.value.resize(nT + 1);
    tables.grad.resize(nT + 1);
    tables.control.resize(nT);
  }
  for (std::size_t k = 0; k < N; ++k) value_next[k] = final_cost(inst, grid.node(k));
  if (opt.keep_tables) {
    tables.value[nT] = value_next;
    tables.grad[nT] = grad_next;
  }

  for (int t = T - 1; t >= 0; --t) {
    const auto st = static_cast<std::size_t>(t);
    const auto& law = noise.stages[st];
    const double committed = p[st];
    parallel_for(N, opt.threads, [&](std::size_t k) {
      const State x = grid.node(k);
      const Interval admissible = admissible_interval(x.soc, inst.battery);
      double best = std::numeric_limits<double>::infinity();
      double best_u = 0.0;
      for (double u : controls.points) {
        if (!admissible.contains(u, 1e-12)) continue;
        const double soc_next = std::clamp(battery_step(x.soc, u, inst.battery), 0.0, 1.0);
        double q = 0.0;
        for (std::size_t a = 0; a < law.size(); ++a) {
          const double gen_raw = raw_generation(inst, t, x.gen, law.values[a]);
          const double d = delivered_power(gen_raw, u);
          const double cost = opt.mu ? regularized_stage_cost_from_delivery(inst, t, d, committed, *opt.mu).value
                                     : stage_cost_from_delivery(inst, t, d, committed);
          const State next{soc_next, std::clamp(gen_raw, 0.0, grid.gen_max)};
          q += law.probs[a] * (cost + bilinear_interp(grid, value_next, next));
        }
        if (q < best) {
          best = q;
          best_u = u;
        }
      }
      if (!std::isfinite(best)) throw std::runtime_error("no admissible control or non-finite value at a grid node");
      value_cur[k] = best;
      control_cur[k] = best_u;

      double* g = grad_cur.data() + k * nT;
      std::fill(g, g + nT, 0.0);
      const double soc_next = std::clamp(battery_step(x.soc, best_u, inst.battery), 0.0, 1.0);
      for (std::size_t a = 0; a < law.size(); ++a) {
        const double gen_raw = raw_generation(inst, t, x.gen, law.values[a]);
        const double d = delivered_power(gen_raw, best_u);
        const double dcost = opt.mu ? regularized_stage_cost_from_delivery(inst, t, d, committed, *opt.mu).grad_t
                                    : stage_cost_subgradient(inst, t, d, committed);
        g[st] += law.probs[a] * dcost;
        const Stencil sn = stencil(grid, {soc_next, std::clamp(gen_raw, 0.0, grid.gen_max)});
        for (int c = 0; c < 4; ++c) {
          if (sn.weight[c] == 0.0) continue;
          const double w = law.probs[a] * sn.weight[c];
          const double* gn = grad_next.data() + sn.node[c] * nT;
          for (std::size_t s = st + 1; s < nT; ++s) g[s] += w * gn[s];
        }
      }
    });
    std::swap(value_cur, value_next);
    std::swap(grad_cur, grad_next);
    if (opt.keep_tables) {
      tables.value[st] = value_next;
      tables.grad[st] = grad_next;
      tables.control[st] = control_cur;
    }
  }

  OracleResult out;
  out.value = value_next[*root];
  out.gradient.assign(grad_next.begin() + static_cast<std::ptrdiff_t>(*root * nT),
                      grad_next.begin() + static_cast<std::ptrdiff_t>((*root + 1) * nT));
  if (opt.keep_tables) out.tables = std::move(tables);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// First-order oracle p -> (value, gradient) of the grid DP at the initial state.
class SdpOracle {
 public:
  SdpOracle(Instance inst, NoiseModel noise, StateGrid grid, ControlGrid controls, DPOptions opt = {})
      : inst_(std::move(inst)), noise_(std::move(noise)), grid_(grid), controls_(std::move(controls)), opt_(opt) {}

  OracleResult operator()(const CommitmentProfile& p) const {
    return backward_solve(inst_, noise_, p, grid_, controls_, opt_);
  }

  const Instance& instance() const { return inst_; }

 private:
  Instance inst_;
  NoiseModel noise_;
  StateGrid grid_;
  ControlGrid controls_;
  DPOptions opt_;
};

}  // namespace pmsop
