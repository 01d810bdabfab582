#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmsop/core_model.hpp"
#include "pmsop/parallel.hpp"
#include "pmsop/scenario.hpp"
#include "pmsop/sddp.hpp"
#include "pmsop/sdp_gradient.hpp"

namespace pmsop {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Projected first-order loop

struct OptimizerConfig {
  CommitmentProfile initial;  // empty = all zeros
  double eta0 = 1000.0;
  int max_iterations = 100;
  double stall_tolerance = 0.005;
  int stall_window = 5;

  void validate() const {
    if (!(eta0 > 0)) throw std::invalid_argument("eta0 must be positive");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (!(stall_tolerance >= 0)) throw std::invalid_argument("stall tolerance must be >= 0");
    if (stall_window < 1) throw std::invalid_argument("stall window must be >= 1");
  }

  double step(int i) const { return eta0 / static_cast<double>(i); }
};

inline CommitmentProfile project_box(CommitmentProfile p, std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != p.size() || hi.size() != p.size()) throw std::invalid_argument("box dimension mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw std::invalid_argument("box lower bound exceeds upper bound");
    p[i] = std::clamp(p[i], lo[i], hi[i]);
  }
  return p;
}

/// Relative objective change used by the stall rule.
inline double relative_progress(double previous, double current) {
  return std::abs(current - previous) / std::max(1.0, std::abs(previous));
}

struct DescentResult {
  CommitmentProfile best;
  double best_value = std::numeric_limits<double>::infinity();
  int best_iteration = 0;  // 1-based
  CommitmentProfile last;
  std::vector<CommitmentProfile> iterates;  // the point of each oracle call
  std::vector<double> values;
  int iterations = 0;  // oracle calls
  bool stalled = false;
  double total_seconds = 0.0;
  double oracle_seconds = 0.0;

  double seconds_per_call() const { return iterations > 0 ? oracle_seconds / iterations : 0.0; }
};

/// Raised when the oracle fails; carries the trajectory recorded so far.
class DescentAborted : public std::runtime_error {
 public:
  DescentAborted(const std::string& what, DescentResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const DescentResult& partial() const { return partial_; }

 private:
  DescentResult partial_;
};

/// p_{i+1} = proj(p_i - (eta0 / i) g_i). Stops after `max_iterations` oracle
/// calls or once the relative progress stays within the tolerance for
/// `stall_window` consecutive iterations; returns the best recorded iterate.
/// `oracle(p)` must return an object with `value` and `gradient` members.
template <class Oracle>
DescentResult projected_descent(Oracle&& oracle, std::span<const double> lo, std::span<const double> hi,
                                const OptimizerConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  DescentResult r;
  CommitmentProfile p = cfg.initial.empty() ? CommitmentProfile(lo.size(), 0.0) : cfg.initial;
  p = project_box(std::move(p), lo, hi);
  int quiet = 0;
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    const auto c0 = Clock::now();
    double value = 0.0;
    std::vector<double> grad;
    try {
      auto out = oracle(p);
      value = out.value;
      grad = std::move(out.gradient);
    } catch (const std::exception& e) {
      r.total_seconds = seconds_since(t0);
      throw DescentAborted(std::string("oracle failed at iteration ") + std::to_string(i) + ": " + e.what(), r);
    }
    r.oracle_seconds += seconds_since(c0);
    if (grad.size() != p.size()) throw std::invalid_argument("oracle gradient has the wrong length");
    r.iterations = i;
    r.iterates.push_back(p);
    r.values.push_back(value);
    if (value < r.best_value) {
      r.best_value = value;
      r.best = p;
      r.best_iteration = i;
    }
    r.last = p;
    if (i > 1) {
      quiet = relative_progress(r.values[r.values.size() - 2], value) <= cfg.stall_tolerance ? quiet + 1 : 0;
      if (quiet >= cfg.stall_window) {
        r.stalled = true;
        break;
      }
    }
    const double eta = cfg.step(i);
    for (std::size_t s = 0; s < p.size(); ++s) p[s] -= eta * grad[s];
    p = project_box(std::move(p), lo, hi);
  }
  r.total_seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Assessment

/// Order-fixed pairwise summation.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

struct AssessConfig {
  int passes = 2000;
  int scenarios = 25000;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (passes < 1 || scenarios < 1) throw std::invalid_argument("assessment needs positive passes and scenarios");
  }
};

struct Assessment {
  double lower = 0.0;
  double upper = 0.0;  // Monte-Carlo mean of the policy cost
  double standard_error = 0.0;
  double gap = 0.0;  // percent of |lower|
  double seconds = 0.0;
  std::vector<double> lower_trace;
};

inline double gap_percent(double lower, double upper) { return (upper - lower) / std::abs(lower) * 100.0; }

/// Realized cost of the fixed-parameter cut policy along one noise path.
inline double simulate_policy(const CutPool& pool, const Instance& inst, const NoiseModel& noise,
                              std::span<const double> scenario) {
  if (pool.mode != SddpMode::Fixed) throw std::invalid_argument("policy simulation needs a fixed-parameter pool");
  return forward_pass(inst, noise, pool, scenario, initial_state(inst, pool)).cost;
}

/// Simulation scenarios come from a stream distinct from the training passes.
inline std::uint64_t simulation_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

inline Assessment assess_pool(const CutPool& pool, const Instance& inst, const NoiseModel& noise,
                              const AssessConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  Assessment a;
  a.lower = pool.value(0, initial_state(inst, pool));
  std::vector<double> cost(static_cast<std::size_t>(cfg.scenarios));
  const std::uint64_t sim = simulation_seed(cfg.seed);
  parallel_for(cost.size(), cfg.threads, [&](std::size_t i) {
    auto rng = scenario_rng(sim, i);
    cost[i] = simulate_policy(pool, inst, noise, sample_scenario(noise, rng));
  });
  const double n = static_cast<double>(cost.size());
  a.upper = pairwise_sum(cost) / n;
  if (cost.size() > 1) {
    std::vector<double> sq(cost.size());
    for (std::size_t i = 0; i < cost.size(); ++i) sq[i] = (cost[i] - a.upper) * (cost[i] - a.upper);
    a.standard_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  }
  a.gap = gap_percent(a.lower, a.upper);
  a.seconds = seconds_since(t0);
  return a;
}

/// Fixed-parameter SDDP lower bound, then Monte-Carlo simulation of its policy.
inline Assessment assess(const Instance& inst, const NoiseModel& noise, const CommitmentProfile& p,
                         const AssessConfig& cfg, CutPool* trained = nullptr) {
  cfg.validate();
  const auto t0 = Clock::now();
  TrainConfig tc;
  tc.passes = cfg.passes;
  tc.seed = cfg.seed;
  tc.mode = SddpMode::Fixed;
  tc.profile = p;
  TrainResult tr = train(inst, noise, tc);
  Assessment a = assess_pool(tr.pool, inst, noise, cfg);
  a.lower = tr.trace.back();
  a.gap = gap_percent(a.lower, a.upper);
  a.lower_trace = std::move(tr.trace);
  a.seconds = seconds_since(t0);
  if (trained) *trained = std::move(tr.pool);
  return a;
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct GridSpec {
  int soc = 6;
  int gen = 6;
  int controls = 21;

  std::string label() const {
    return std::to_string(soc) + "x" + std::to_string(gen) + "," + std::to_string(controls);
  }
};

struct DataSpec {
  std::string source = "synthetic";  // or "csv"
  std::string path;
  int days = 365;
  std::uint64_t seed = 1;
  double scale = 0.0;  // csv: <= 0 normalizes the maximum to the peak power
};

struct ExperimentConfig {
  Instance instance;  // ar1 filled by build_model
  DataSpec data;
  int atoms = 10;
  std::uint64_t noise_seed = 1;
  std::string noise_file;  // when set, weights and noise are read from it
  std::vector<GridSpec> musdp_grids;
  double mu = 0.1;
  unsigned dp_threads = 1;
  std::vector<int> ksddp_passes;
  std::uint64_t ksddp_seed = 1;
  OptimizerConfig optimizer;
  AssessConfig assessment;
  bool assess_baseline = false;
};

inline ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.instance.horizon = 48;
  c.instance.tariff = TariffSchedule::two_level(48, c.instance.battery.dt, 0.4, 0.6, 19.0, 21.0, 2.0);
  c.instance.default_parameter_box();
  c.musdp_grids = {GridSpec{}};
  // Prices are per MWh, so costs are a thousandth of a kWh-priced model and the
  // step that suits a kWh model would be a thousand times too long here.
  c.optimizer.eta0 = 1.0;
  return c;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c = default_experiment();
  Instance& inst = c.instance;
  inst.horizon = j.value("horizon", 48);
  if (j.contains("battery")) {
    const auto& b = j.at("battery");
    auto& bp = inst.battery;
    bp.capacity = b.value("capacity", bp.capacity);
    bp.u_min = b.value("u_min", bp.u_min);
    bp.u_max = b.value("u_max", bp.u_max);
    bp.rho_c = b.value("rho_c", bp.rho_c);
    bp.rho_d = b.value("rho_d", bp.rho_d);
    bp.dt = b.value("dt", bp.dt);
    bp.peak = b.value("peak", bp.peak);
  }
  const nlohmann::json tariff = j.value("tariff", nlohmann::json::object());
  if (tariff.contains("prices")) {
    inst.tariff.price = tariff.at("prices").get<std::vector<double>>();
    inst.tariff.penalty = tariff.value("penalty", 2.0);
  } else {
    inst.tariff = TariffSchedule::two_level(inst.horizon, inst.battery.dt, tariff.value("off_peak", 0.4),
                                            tariff.value("on_peak", 0.6), tariff.value("peak_start_hour", 19.0),
                                            tariff.value("peak_end_hour", 21.0), tariff.value("penalty", 2.0));
  }
  if (j.contains("initial_state")) {
    inst.initial.soc = j.at("initial_state").value("soc", 0.0);
    inst.initial.gen = j.at("initial_state").value("gen", 0.0);
  }
  inst.default_parameter_box();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.data.source = d.value("source", c.data.source);
    c.data.path = d.value("path", c.data.path);
    c.data.days = d.value("days", c.data.days);
    c.data.seed = d.value("seed", c.data.seed);
    c.data.scale = d.value("scale", c.data.scale);
    if (c.data.source != "synthetic" && c.data.source != "csv")
      throw std::invalid_argument("data.source must be synthetic or csv");
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    c.atoms = n.value("atoms", c.atoms);
    c.noise_seed = n.value("seed", c.noise_seed);
    c.noise_file = n.value("file", c.noise_file);
  }
  if (j.contains("musdp")) {
    const auto& m = j.at("musdp");
    c.mu = m.value("mu", c.mu);
    c.dp_threads = m.value("threads", c.dp_threads);
    if (m.contains("grids")) {
      c.musdp_grids.clear();
      for (const auto& g : m.at("grids")) c.musdp_grids.push_back({g.at("soc"), g.at("gen"), g.at("controls")});
    }
  }
  if (j.contains("ksddp")) {
    c.ksddp_passes = j.at("ksddp").value("passes", std::vector<int>{});
    c.ksddp_seed = j.at("ksddp").value("seed", c.ksddp_seed);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    auto& oc = c.optimizer;
    oc.eta0 = o.value("eta0", oc.eta0);
    oc.max_iterations = o.value("max_iterations", oc.max_iterations);
    oc.stall_tolerance = o.value("stall_tolerance", oc.stall_tolerance);
    oc.stall_window = o.value("stall_window", oc.stall_window);
    oc.initial = o.value("initial_profile", oc.initial);
    oc.validate();
  }
  if (j.contains("assessment")) {
    const auto& a = j.at("assessment");
    auto& ac = c.assessment;
    ac.passes = a.value("passes", ac.passes);
    ac.scenarios = a.value("scenarios", ac.scenarios);
    ac.seed = a.value("seed", ac.seed);
    ac.threads = a.value("threads", ac.threads);
    ac.validate();
  }
  c.assess_baseline = j.value("assess_baseline", c.assess_baseline);
  for (const auto& g : c.musdp_grids)
    if (g.soc < 2 || g.gen < 2 || g.controls < 2) throw std::invalid_argument("grid sizes must be >= 2");
  for (int k : c.ksddp_passes)
    if (k < 1) throw std::invalid_argument("kSDDP pass counts must be >= 1");
  if (!(c.mu > 0)) throw std::invalid_argument("mu must be positive");
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return experiment_from_json(nlohmann::json::parse(in));
}

// Calibrated model files: AR(1) weights plus the per-stage noise laws.

inline nlohmann::json calibration_to_json(const AR1Weights& w, const NoiseModel& noise) {
  nlohmann::json j;
  j["format"] = "pmsop-noise";
  j["version"] = 1;
  j["alpha"] = w.alpha;
  j["beta"] = w.beta;
  auto& st = j["stages"] = nlohmann::json::array();
  for (const auto& d : noise.stages) st.push_back({{"values", d.values}, {"probs", d.probs}});
  return j;
}

inline std::pair<AR1Weights, NoiseModel> calibration_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pmsop-noise" || j.value("version", 0) != 1)
    throw std::runtime_error("not a version-1 noise model file");
  AR1Weights w{j.at("alpha").get<std::vector<double>>(), j.at("beta").get<std::vector<double>>()};
  NoiseModel m;
  for (const auto& s : j.at("stages")) {
    DiscreteDistribution d{s.at("values").get<std::vector<double>>(), s.at("probs").get<std::vector<double>>()};
    d.validate();
    m.stages.push_back(std::move(d));
  }
  if (w.alpha.size() != m.horizon() || w.beta.size() != m.horizon())
    throw std::runtime_error("noise model stage count does not match its weights");
  return {std::move(w), std::move(m)};
}

struct Model {
  Instance instance;
  NoiseModel noise;
};

inline HistoricalSeries load_series(const ExperimentConfig& c) {
  if (c.data.source == "csv") return read_series_csv(c.data.path, c.data.scale, c.instance.battery.peak);
  return synthetic_series(c.data.days, c.instance.horizon, c.instance.battery.peak, c.data.seed);
}

/// Instance with calibrated dynamics and its noise model.
inline Model build_model(const ExperimentConfig& c) {
  Model m{c.instance, {}};
  if (!c.noise_file.empty()) {
    std::ifstream in(c.noise_file);
    if (!in) throw std::runtime_error("cannot open " + c.noise_file);
    auto [w, noise] = calibration_from_json(nlohmann::json::parse(in));
    m.instance.ar1 = std::move(w);
    m.noise = std::move(noise);
  } else {
    Calibration cal = calibrate(load_series(c), c.instance.horizon, c.atoms, c.noise_seed);
    m.instance.ar1 = std::move(cal.weights);
    m.noise = std::move(cal.noise);
  }
  m.instance.validate();
  if (m.noise.horizon() != static_cast<std::size_t>(m.instance.horizon))
    throw std::runtime_error("noise model horizon does not match the instance");
  return m;
}

// ---------------------------------------------------------------------------
// Oracles and reports

inline SdpOracle make_musdp_oracle(const Model& m, const GridSpec& g, double mu, unsigned threads) {
  DPOptions opt;
  opt.mu = mu;
  opt.threads = threads;
  return SdpOracle(m.instance, m.noise, StateGrid{g.soc, g.gen, m.instance.battery.peak},
                   ControlGrid::uniform(g.controls, m.instance.battery.u_min, m.instance.battery.u_max), opt);
}

/// Each call trains `passes` extended-state passes whose forward parameter is
/// the queried p, then reads value and subgradient at (x0, p).
inline std::function<KsddpOutput(const CommitmentProfile&)> make_ksddp_oracle(const Model& m, int passes,
                                                                               std::uint64_t seed) {
  return [&m, passes, seed](const CommitmentProfile& p) {
    TrainConfig tc;
    tc.passes = passes;
    tc.seed = seed;
    tc.mode = SddpMode::Extended;
    tc.profile = p;
    const CutPool pool = train(m.instance, m.noise, tc).pool;
    return oracle_ksddp(m.instance, m.noise, pool, p);
  };
}

struct RunReport {
  std::string method;   // musdp, ksddp or baseline
  std::string setting;  // "6x6,21", "80" or "p0"
  int iterations = 0;
  double seconds = 0.0;
  double seconds_per_call = 0.0;
  double lower = std::nan("");
  double upper = std::nan("");
  double standard_error = std::nan("");
  double gap = std::nan("");
  std::string error;  // empty when the row succeeded
  CommitmentProfile profile;
  std::vector<double> objective_trace;
  std::vector<double> lower_trace;
  int best_iteration = 0;
  bool stalled = false;

  bool ok() const { return error.empty(); }
};

/// The seven table columns. Failed rows keep their label and leave the numbers
/// empty; the reason goes to the JSON sidecar.
inline const char* kReportHeader =
    "implementation,iterations,time_s,time_per_call_s,lower_bound,simulation_cost,gap_pct";

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string format_fixed(double v, int digits) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// "musdp 6x6,21", "ksddp 80" or "baseline p0".
inline std::string report_label(const RunReport& r) { return r.setting.empty() ? r.method : r.method + " " + r.setting; }

/// One table row: times with one decimal, euro values with four, gap with one.
inline std::string report_csv_row(const RunReport& r) {
  std::ostringstream o;
  o << csv_quote(report_label(r)) << ',' << r.iterations << ',' << format_fixed(r.seconds, 1) << ','
    << format_fixed(r.seconds_per_call, 1) << ',' << format_fixed(r.lower, 4) << ',' << format_fixed(r.upper, 4)
    << ',' << format_fixed(r.gap, 1);
  return o.str();
}

inline void write_report_csv(std::ostream& out, const std::vector<RunReport>& rows) {
  out << kReportHeader << '\n';
  for (const auto& r : rows) out << report_csv_row(r) << '\n';
}

inline nlohmann::json report_to_json(const RunReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"method", r.method},
          {"setting", r.setting},
          {"iterations", r.iterations},
          {"time_s", r.seconds},
          {"time_per_call_s", r.seconds_per_call},
          {"lower_bound", num(r.lower)},
          {"simulation_cost", num(r.upper)},
          {"standard_error", num(r.standard_error)},
          {"gap_pct", num(r.gap)},
          {"status", r.ok() ? "ok" : r.error},
          {"profile", r.profile},
          {"objective_trace", r.objective_trace},
          {"lower_bound_trace", r.lower_trace},
          {"best_iteration", r.best_iteration},
          {"stalled", r.stalled}};
}

inline void fill_assessment(RunReport& r, const Assessment& a) {
  r.lower = a.lower;
  r.upper = a.upper;
  r.standard_error = a.standard_error;
  r.gap = a.gap;
  r.lower_trace = a.lower_trace;
}

inline void fill_descent(RunReport& r, const DescentResult& d) {
  r.iterations = d.iterations;
  r.seconds = d.total_seconds;
  r.seconds_per_call = d.seconds_per_call();
  r.profile = d.best;
  r.objective_trace = d.values;
  r.best_iteration = d.best_iteration;
  r.stalled = d.stalled;
}

/// Optimizes with one method and setting, then assesses the returned profile.
/// Failures are recorded in the row instead of propagating.
template <class Oracle>
RunReport solve_and_assess(const Model& m, const ExperimentConfig& c, std::string method, std::string setting,
                           Oracle&& oracle) {
  RunReport r;
  r.method = std::move(method);
  r.setting = std::move(setting);
  try {
    const DescentResult d = projected_descent(oracle, m.instance.param_lo, m.instance.param_hi, c.optimizer);
    fill_descent(r, d);
    fill_assessment(r, assess(m.instance, m.noise, d.best, c.assessment));
  } catch (const DescentAborted& e) {
    fill_descent(r, e.partial());
    r.error = e.what();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

/// calibrate -> solve -> assess for every declared implementation.
inline std::vector<RunReport> run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr) {
  const Model m = build_model(c);
  std::vector<RunReport> rows;
  auto note = [&](const RunReport& r) {
    rows.push_back(r);
    if (log) *log << report_csv_row(r) << (r.ok() ? "" : "  [failed: " + r.error + "]") << std::endl;
  };
  if (c.assess_baseline) {
    RunReport r;
    r.method = "baseline";
    r.setting = "p0";
    r.profile = c.optimizer.initial.empty() ? CommitmentProfile(static_cast<std::size_t>(m.instance.horizon), 0.0)
                                            : c.optimizer.initial;
    try {
      fill_assessment(r, assess(m.instance, m.noise, r.profile, c.assessment));
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    note(r);
  }
  for (const auto& g : c.musdp_grids) {
    RunReport r;
    try {
      r = solve_and_assess(m, c, "musdp", g.label(), make_musdp_oracle(m, g, c.mu, c.dp_threads));
    } catch (const std::exception& e) {
      r.method = "musdp";
      r.setting = g.label();
      r.error = e.what();
    }
    note(r);
  }
  for (int k : c.ksddp_passes) note(solve_and_assess(m, c, "ksddp", std::to_string(k), make_ksddp_oracle(m, k, c.ksddp_seed)));
  return rows;
}

}  // namespace pmsop
