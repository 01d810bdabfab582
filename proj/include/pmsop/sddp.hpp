#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmsop/core_model.hpp"
#include "pmsop/lp_simplex.hpp"
#include "pmsop/scenario.hpp"

namespace pmsop {

/// Fixed: the state is (soc, gen) and p is a constant of the model.
/// Extended: the state is (soc, gen, p_0, ..., p_{T-1}) with p carried unchanged.
enum class SddpMode { Fixed, Extended };

/// Affine minorant theta + slope . (z - anchor) of a stage value function.
struct Cut {
  double intercept = 0.0;
  std::vector<double> slope;
  std::vector<double> anchor;

  double operator()(std::span<const double> z) const {
    double v = intercept;
    for (std::size_t i = 0; i < slope.size(); ++i) v += slope[i] * (z[i] - anchor[i]);
    return v;
  }
};

/// Cuts and a constant lower bound per stage t in [0, T].
struct CutPool {
  SddpMode mode = SddpMode::Fixed;
  CommitmentProfile profile;  // the fixed parameter in Fixed mode
  std::vector<std::vector<Cut>> cuts;
  std::vector<double> lower_bound;

  int horizon() const { return static_cast<int>(cuts.size()) - 1; }

  std::size_t state_dim() const {
    return mode == SddpMode::Fixed ? 2 : 2 + static_cast<std::size_t>(horizon());
  }

  /// Polyhedral lower value function: max of the stage bound and every cut.
  double value(int t, std::span<const double> z) const {
    double v = lower_bound[static_cast<std::size_t>(t)];
    for (const auto& c : cuts[static_cast<std::size_t>(t)]) v = std::max(v, c(z));
    return v;
  }

  std::size_t total_cuts() const {
    std::size_t n = 0;
    for (const auto& s : cuts) n += s.size();
    return n;
  }
};

/// Valid lower bounds on the remaining cost from each stage: the largest
/// possible revenue (reachable unprojected generation plus full discharge)
/// at every remaining step, and a full battery sold at the final price.
inline std::vector<double> default_lower_bounds(const Instance& inst, const NoiseModel& noise) {
  const auto T = static_cast<std::size_t>(inst.horizon);
  std::vector<double> reach(T + 1);
  reach[0] = std::max(std::abs(inst.initial.gen), inst.battery.peak);
  for (std::size_t t = 0; t < T; ++t) {
    double wmax = 0.0;
    for (double w : noise.stages[t].values) wmax = std::max(wmax, std::abs(w));
    reach[t + 1] = std::abs(inst.ar1.alpha[t]) * reach[t] + std::abs(inst.ar1.beta[t]) + wmax;
  }
  const double discharge = std::max(inst.battery.u_max, -inst.battery.u_min);
  const double final_bound = -inst.tariff.price[T] * inst.battery.capacity;
  std::vector<double> M(T + 1);
  M[T] = final_bound;
  double acc = final_bound;
  for (std::size_t t = T; t-- > 0;) {
    acc -= inst.tariff.price[t] * inst.battery.dt * (reach[t + 1] + discharge);
    M[t] = acc;
  }
  return M;
}

/// Empty pool whose terminal stage holds the exact (linear) final cost.
inline CutPool make_pool(const Instance& inst, SddpMode mode, std::vector<double> lower_bounds,
                         CommitmentProfile profile = {}) {
  const auto T = static_cast<std::size_t>(inst.horizon);
  if (lower_bounds.size() != T + 1) throw std::invalid_argument("need T + 1 stage lower bounds");
  CutPool pool;
  pool.mode = mode;
  pool.profile = std::move(profile);
  if (mode == SddpMode::Fixed && pool.profile.size() != T)
    throw std::invalid_argument("fixed-parameter pool needs a profile of length T");
  pool.cuts.resize(T + 1);
  pool.lower_bound = std::move(lower_bounds);
  Cut terminal;
  terminal.slope.assign(pool.state_dim(), 0.0);
  terminal.anchor.assign(pool.state_dim(), 0.0);
  terminal.slope[0] = -inst.tariff.price[T] * inst.battery.capacity;
  pool.cuts[T].push_back(std::move(terminal));
  return pool;
}

/// Stage problem with the column and row indices needed to read it back.
struct StageLP {
  LinearProgram lp;
  int uc = -1, ud = -1, soc_next = -1;
  std::vector<int> pin_rows;  // one per extended-state coordinate; -1 where the coordinate is absent
  std::vector<int> theta;     // cost-to-go epigraph per noise atom
  std::size_t cut_rows = 0;
};

namespace detail {

/// Indices of the lines a_k + b_k s that attain the maximum somewhere on [0, 1].
inline std::vector<std::size_t> upper_envelope(std::span<const double> a, std::span<const double> b) {
  std::vector<std::size_t> keep;
  if (a.empty()) return keep;
  constexpr double eps = 1e-12;
  std::size_t cur = 0;
  for (std::size_t k = 1; k < a.size(); ++k)
    if (a[k] > a[cur] + eps || (a[k] >= a[cur] - eps && b[k] > b[cur])) cur = k;
  double s = 0.0;
  keep.push_back(cur);
  for (;;) {
    std::size_t next = a.size();
    double best_x = 1.0 + eps;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (b[k] <= b[cur]) continue;
      const double x = (a[cur] - a[k]) / (b[k] - b[cur]);
      if (x < s - eps) continue;
      if (x < best_x - eps || (x <= best_x + eps && next < a.size() && b[k] > b[next])) {
        best_x = x;
        next = k;
      }
    }
    if (next == a.size()) break;
    cur = next;
    s = std::max(s, best_x);
    keep.push_back(cur);
  }
  return keep;
}

/// Next-stage cuts restricted to one noise atom: lines a + b soc' at the
/// pinned generation and parameter.
struct AtomLines {
  std::vector<double> a, b;

  double value(std::size_t j, double soc) const { return a[j] + b[j] * soc; }
};

inline std::vector<AtomLines> atom_lines(const Instance& inst, const NoiseModel& noise, const CutPool& pool, int t,
                                         std::span<const double> state) {
  const auto st = static_cast<std::size_t>(t);
  const auto& law = noise.stages[st];
  const auto& next_cuts = pool.cuts[st + 1];
  std::vector<double> z(state.begin(), state.end());
  std::vector<AtomLines> out(law.size());
  for (std::size_t k = 0; k < law.size(); ++k) {
    z[0] = 0.0;
    z[1] = raw_generation(inst, t, state[1], law.values[k]);
    out[k].a.resize(next_cuts.size());
    out[k].b.resize(next_cuts.size());
    for (std::size_t j = 0; j < next_cuts.size(); ++j) {
      out[k].a[j] = next_cuts[j](z);
      out[k].b[j] = next_cuts[j].slope[0];
    }
  }
  return out;
}

}  // namespace detail

/// Decision-hazard stage LP at an incoming extended state, holding only the
/// next-stage cuts listed per noise atom in `active`.
///
/// Variables: pinned copies of the incoming state (free, fixed by equality
/// rows whose duals are the cut slope), split charge/discharge controls, the
/// next state of charge, and per noise atom a penalty epigraph and a cost-to-go
/// epigraph bounded below by the stage bound.
inline StageLP build_stage_lp(const Instance& inst, const NoiseModel& noise, const CutPool& pool, int t,
                              std::span<const double> state, const std::vector<std::vector<std::size_t>>& active) {
  if (t < 0 || t >= inst.horizon) throw std::out_of_range("stage index out of range");
  const auto st = static_cast<std::size_t>(t);
  const std::size_t T = static_cast<std::size_t>(inst.horizon);
  const std::size_t dim = pool.state_dim();
  if (state.size() != dim) throw std::invalid_argument("state dimension does not match the pool");
  for (double v : state) detail::require_finite(v, "incoming state");
  const bool extended = pool.mode == SddpMode::Extended;
  const double committed = extended ? state[2 + st] : pool.profile[st];
  const auto& bat = inst.battery;
  const double c = inst.tariff.price[st];
  const double a_pen = penalty_slope(inst, t);
  const double alpha = inst.ar1.alpha[st];
  const double beta = inst.ar1.beta[st];
  const auto& law = noise.stages[st];
  if (active.size() != law.size()) throw std::invalid_argument("need one active cut list per noise atom");

  StageLP out;
  LinearProgram& lp = out.lp;
  out.pin_rows.assign(dim, -1);
  std::vector<int> pin_var(dim, -1);
  auto pin = [&](std::size_t i) {
    pin_var[i] = lp.add_variable(-kInf, kInf);
    out.pin_rows[i] = lp.add_row({{pin_var[i], 1.0}}, RowSense::Equal, state[i]);
  };
  pin(0);
  pin(1);
  if (extended)
    for (std::size_t s = st; s < T; ++s) pin(2 + s);
  const int soc_in = pin_var[0], gen_in = pin_var[1];

  out.uc = lp.add_variable(0.0, bat.u_max, c * bat.dt);
  out.ud = lp.add_variable(0.0, -bat.u_min, -c * bat.dt);
  out.soc_next = lp.add_variable(0.0, 1.0);
  lp.cost[static_cast<std::size_t>(gen_in)] = -c * bat.dt * alpha;
  lp.add_row({{out.soc_next, 1.0},
              {soc_in, -1.0},
              {out.uc, -bat.rho_c * bat.dt / bat.capacity},
              {out.ud, bat.dt / (bat.rho_d * bat.capacity)}},
             RowSense::Equal, 0.0);

  const auto& next_cuts = pool.cuts[st + 1];
  for (std::size_t k = 0; k < law.size(); ++k) {
    const double w = law.values[k];
    const double prob = law.probs[k];
    lp.cost_offset += -c * bat.dt * prob * (beta + w);
    if (a_pen > 0) {
      // e >= d - p and e >= p - d with d = alpha gen_in + beta + w - uc + ud.
      const int e = lp.add_variable(0.0, kInf, prob * a_pen);
      std::vector<std::pair<int, double>> up{{e, 1.0}, {gen_in, -alpha}, {out.uc, 1.0}, {out.ud, -1.0}};
      std::vector<std::pair<int, double>> dn{{e, 1.0}, {gen_in, alpha}, {out.uc, -1.0}, {out.ud, 1.0}};
      double rhs_up = beta + w, rhs_dn = -(beta + w);
      if (extended) {
        up.emplace_back(pin_var[2 + st], 1.0);
        dn.emplace_back(pin_var[2 + st], -1.0);
      } else {
        rhs_up -= committed;
        rhs_dn += committed;
      }
      lp.add_row(std::move(up), RowSense::GreaterEqual, rhs_up);
      lp.add_row(std::move(dn), RowSense::GreaterEqual, rhs_dn);
    }
    const int theta = lp.add_variable(pool.lower_bound[st + 1], kInf, prob);
    out.theta.push_back(theta);

    // Cut j at this atom: theta >= intercept + slope . ((soc', alpha gen_in + beta + w, p) - anchor).
    for (std::size_t j : active[k]) {
      const Cut& cut = next_cuts[j];
      std::vector<std::pair<int, double>> terms{{theta, 1.0}, {out.soc_next, -cut.slope[0]}};
      double rhs = cut.intercept + cut.slope[1] * (beta + w);
      for (std::size_t i = 0; i < dim; ++i) rhs -= cut.slope[i] * cut.anchor[i];
      if (cut.slope[1] != 0.0) terms.emplace_back(gen_in, -cut.slope[1] * alpha);
      for (std::size_t i = 2; i < dim; ++i)
        if (cut.slope[i] != 0.0) {
          if (pin_var[i] >= 0) terms.emplace_back(pin_var[i], -cut.slope[i]);
          else rhs += cut.slope[i] * state[i];
        }
      lp.add_row(std::move(terms), RowSense::GreaterEqual, rhs);
      ++out.cut_rows;
    }
  }
  return out;
}

/// Stage LP holding, per atom, every cut on the upper envelope over soc' in [0, 1];
/// the remaining cuts are redundant rows.
inline StageLP build_stage_lp(const Instance& inst, const NoiseModel& noise, const CutPool& pool, int t,
                              std::span<const double> state) {
  if (t < 0 || t >= inst.horizon) throw std::out_of_range("stage index out of range");
  std::vector<std::vector<std::size_t>> active;
  for (const auto& lines : detail::atom_lines(inst, noise, pool, t, state))
    active.push_back(detail::upper_envelope(lines.a, lines.b));
  return build_stage_lp(inst, noise, pool, t, state, active);
}

struct StageDecision {
  double value = 0.0;             // stage LP optimum
  double charge = 0.0;            // u_c
  double discharge = 0.0;         // u_d
  double soc_next = 0.0;
  std::vector<double> subgradient;  // duals of the pinned state rows
  int rounds = 0;                   // LP solves spent on row generation
};

/// Solves the stage LP by row generation: each atom starts with the cut that
/// is highest at the incoming state of charge, and the most violated cut per
/// atom is added until the epigraph variables satisfy every cut. The final LP
/// has the optimum, and duals, of the LP with all cuts.
inline StageDecision solve_stage(const Instance& inst, const NoiseModel& noise, const CutPool& pool, int t,
                                 std::span<const double> state) {
  const auto lines = detail::atom_lines(inst, noise, pool, t, state);
  const double lb = pool.lower_bound[static_cast<std::size_t>(t) + 1];
  std::vector<std::vector<std::size_t>> active(lines.size());
  auto most_violated = [&](std::size_t k, double soc, double theta) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double best_v = theta + 1e-10 * (1.0 + std::abs(theta));
    for (std::size_t j = 0; j < lines[k].a.size(); ++j) {
      const double v = lines[k].value(j, soc);
      if (v > best_v) {
        best_v = v;
        best = j;
      }
    }
    return best;
  };
  for (std::size_t k = 0; k < lines.size(); ++k)
    if (auto j = most_violated(k, state[0], lb)) active[k].push_back(*j);

  StageDecision d;
  for (;;) {
    const StageLP stage = build_stage_lp(inst, noise, pool, t, state, active);
    const LPSolution sol = solve(stage.lp);
    ++d.rounds;
    if (sol.status != LPStatus::Optimal)
      throw std::runtime_error(std::string("stage LP at t=") + std::to_string(t) + " is " + to_string(sol.status));
    const double soc_next = sol.x[static_cast<std::size_t>(stage.soc_next)];
    bool added = false;
    for (std::size_t k = 0; k < lines.size(); ++k)
      if (auto j = most_violated(k, soc_next, sol.x[static_cast<std::size_t>(stage.theta[k])])) {
        if (std::find(active[k].begin(), active[k].end(), *j) != active[k].end())
          throw std::runtime_error("row generation revisited an active cut");
        active[k].push_back(*j);
        added = true;
      }
    if (added) continue;
    d.value = sol.objective;
    d.charge = sol.x[static_cast<std::size_t>(stage.uc)];
    d.discharge = sol.x[static_cast<std::size_t>(stage.ud)];
    d.soc_next = std::clamp(soc_next, 0.0, 1.0);
    d.subgradient.assign(stage.pin_rows.size(), 0.0);
    for (std::size_t i = 0; i < stage.pin_rows.size(); ++i)
      if (stage.pin_rows[i] >= 0) d.subgradient[i] = sol.row_duals[static_cast<std::size_t>(stage.pin_rows[i])];
    return d;
  }
}

struct Trajectory {
  std::vector<std::vector<double>> states;  // extended states at t = 0..T
  std::vector<double> controls;             // u_c - u_d
  double cost = 0.0;                        // realized stage costs plus final cost
};

/// Initial extended state of a pool.
inline std::vector<double> initial_state(const Instance& inst, const CutPool& pool,
                                         const CommitmentProfile& p = {}) {
  std::vector<double> z{inst.initial.soc, inst.initial.gen};
  if (pool.mode == SddpMode::Extended) {
    if (p.size() != static_cast<std::size_t>(inst.horizon)) throw std::invalid_argument("profile length mismatch");
    z.insert(z.end(), p.begin(), p.end());
  }
  return z;
}

/// Rolls the stage-LP policy along a noise path. Generation follows the affine
/// model of the stage LPs; the parameter block is copied unchanged.
inline Trajectory forward_pass(const Instance& inst, const NoiseModel& noise, const CutPool& pool,
                               std::span<const double> noise_path, std::vector<double> start) {
  const auto T = static_cast<std::size_t>(inst.horizon);
  if (noise_path.size() != T) throw std::invalid_argument("scenario length must equal the horizon");
  Trajectory traj;
  traj.states.reserve(T + 1);
  traj.states.push_back(std::move(start));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& z = traj.states.back();
    const StageDecision d = solve_stage(inst, noise, pool, static_cast<int>(t), z);
    const double u = d.charge - d.discharge;
    const double gen_next = raw_generation(inst, static_cast<int>(t), z[1], noise_path[t]);
    const double committed = pool.mode == SddpMode::Extended ? z[2 + t] : pool.profile[t];
    traj.cost += stage_cost_from_delivery(inst, static_cast<int>(t), delivered_power(gen_next, u), committed);
    traj.controls.push_back(u);
    std::vector<double> next = z;
    next[0] = d.soc_next;
    next[1] = gen_next;
    traj.states.push_back(std::move(next));
  }
  traj.cost += -inst.tariff.price[T] * traj.states.back()[0] * inst.battery.capacity;
  return traj;
}

/// Adds one cut per stage t = T-1..0 at the visited states; returns the stage-0 value.
inline double backward_pass(const Instance& inst, const NoiseModel& noise, CutPool& pool,
                            const std::vector<std::vector<double>>& visited) {
  double root = 0.0;
  for (int t = inst.horizon - 1; t >= 0; --t) {
    const auto& z = visited[static_cast<std::size_t>(t)];
    const StageDecision d = solve_stage(inst, noise, pool, t, z);
    pool.cuts[static_cast<std::size_t>(t)].push_back(Cut{d.value, d.subgradient, z});
    root = d.value;
  }
  return root;
}

struct TrainConfig {
  int passes = 100;
  std::uint64_t seed = 1;
  SddpMode mode = SddpMode::Fixed;
  CommitmentProfile profile;          // fixed parameter, or forward-pass parameter in Extended mode
  std::vector<double> lower_bounds;   // empty = default_lower_bounds

  void validate() const {
    if (passes < 1) throw std::invalid_argument("SDDP needs at least one pass");
  }
};

struct TrainResult {
  CutPool pool;
  std::vector<double> trace;  // root lower bound after each pass
};

/// Forward passes along sampled scenarios, each followed by a backward pass.
inline TrainResult train(const Instance& inst, const NoiseModel& noise, const TrainConfig& cfg) {
  cfg.validate();
  if (noise.horizon() != static_cast<std::size_t>(inst.horizon)) throw std::invalid_argument("noise horizon mismatch");
  if (cfg.profile.size() != static_cast<std::size_t>(inst.horizon))
    throw std::invalid_argument("training needs a profile of length T");
  TrainResult out;
  out.pool = make_pool(inst, cfg.mode, cfg.lower_bounds.empty() ? default_lower_bounds(inst, noise) : cfg.lower_bounds,
                       cfg.mode == SddpMode::Fixed ? cfg.profile : CommitmentProfile{});
  const std::vector<double> start = initial_state(inst, out.pool, cfg.profile);
  out.trace.reserve(static_cast<std::size_t>(cfg.passes));
  for (int i = 0; i < cfg.passes; ++i) {
    auto rng = scenario_rng(cfg.seed, static_cast<std::uint64_t>(i));
    const auto path = sample_scenario(noise, rng);
    const Trajectory traj = forward_pass(inst, noise, out.pool, path, start);
    out.trace.push_back(backward_pass(inst, noise, out.pool, traj.states));
  }
  return out;
}

struct KsddpOutput {
  double value = 0.0;
  std::vector<double> gradient;  // subgradient in p
};

/// Value of the extended-state pool at (x0, p) and a subgradient in p read
/// from the duals of the pinned parameter rows.
inline KsddpOutput oracle_ksddp(const Instance& inst, const NoiseModel& noise, const CutPool& pool,
                                const CommitmentProfile& p) {
  if (pool.mode != SddpMode::Extended) throw std::invalid_argument("the parametric oracle needs an extended pool");
  const StageDecision d = solve_stage(inst, noise, pool, 0, initial_state(inst, pool, p));
  return {d.value, std::vector<double>(d.subgradient.begin() + 2, d.subgradient.end())};
}

/// Root lower bound of a fixed-parameter training run.
inline double lower_bound_fixed_p(const Instance& inst, const NoiseModel& noise, const CommitmentProfile& p,
                                  int passes, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.passes = passes;
  cfg.seed = seed;
  cfg.mode = SddpMode::Fixed;
  cfg.profile = p;
  return train(inst, noise, cfg).trace.back();
}

// ---------------------------------------------------------------------------
// Cut pool files

inline nlohmann::json to_json(const CutPool& pool) {
  nlohmann::json j;
  j["format"] = "pmsop-cuts";
  j["version"] = 1;
  j["mode"] = pool.mode == SddpMode::Fixed ? "fixed" : "extended";
  j["profile"] = pool.profile;
  auto& stages = j["stages"] = nlohmann::json::array();
  for (std::size_t t = 0; t < pool.cuts.size(); ++t) {
    nlohmann::json s;
    s["lower_bound"] = pool.lower_bound[t];
    auto& cuts = s["cuts"] = nlohmann::json::array();
    for (const auto& c : pool.cuts[t]) cuts.push_back({{"theta", c.intercept}, {"lambda", c.slope}, {"anchor", c.anchor}});
    stages.push_back(std::move(s));
  }
  return j;
}

inline CutPool cut_pool_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pmsop-cuts") throw std::runtime_error("not a cut pool file");
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported cut pool version");
  CutPool pool;
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "fixed" && mode != "extended") throw std::runtime_error("unknown cut pool mode " + mode);
  pool.mode = mode == "fixed" ? SddpMode::Fixed : SddpMode::Extended;
  pool.profile = j.at("profile").get<std::vector<double>>();
  for (const auto& s : j.at("stages")) {
    pool.lower_bound.push_back(s.at("lower_bound").get<double>());
    auto& stage = pool.cuts.emplace_back();
    for (const auto& c : s.at("cuts"))
      stage.push_back(Cut{c.at("theta").get<double>(), c.at("lambda").get<std::vector<double>>(),
                          c.at("anchor").get<std::vector<double>>()});
  }
  for (const auto& stage : pool.cuts)
    for (const auto& c : stage)
      if (c.slope.size() != pool.state_dim() || c.anchor.size() != pool.state_dim())
        throw std::runtime_error("cut dimension does not match the pool mode");
  return pool;
}

inline void save_cut_pool(const CutPool& pool, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(pool).dump(1) << '\n';
}

inline CutPool load_cut_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return cut_pool_from_json(nlohmann::json::parse(in));
}

}  // namespace pmsop
