// pmsop command line: calibrate, solve, assess, report, run.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pmsop/driver.hpp"

namespace {

using namespace pmsop;
using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

/// report.csv -> report.json
std::string sidecar_path(const std::string& csv) {
  const auto dot = csv.rfind('.');
  const auto slash = csv.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return csv + ".json";
  return csv.substr(0, dot) + ".json";
}

void write_reports(const std::string& path, const std::vector<RunReport>& rows) {
  std::ostringstream csv;
  write_report_csv(csv, rows);
  write_text(path, csv.str());
  if (path.empty() || path == "-") return;
  json side = json::array();
  for (const auto& r : rows) side.push_back(report_to_json(r));
  write_text(sidecar_path(path), side.dump(2) + "\n");
}

GridSpec parse_grid(const std::string& s) {
  GridSpec g;
  if (std::sscanf(s.c_str(), "%dx%d,%d", &g.soc, &g.gen, &g.controls) != 3)
    throw std::invalid_argument("grid must look like 6x6,21");
  return g;
}

int run_calibrate(const std::string& csv, int atoms, std::uint64_t seed, int horizon, double scale, double peak,
                  const std::string& out) {
  const HistoricalSeries series = read_series_csv(csv, scale, peak);
  const int T = horizon > 0 ? horizon : static_cast<int>(series.num_stages());
  const Calibration cal = calibrate(series, T, atoms, seed);
  write_text(out, calibration_to_json(cal.weights, cal.noise).dump(2) + "\n");
  std::cerr << "calibrated " << series.num_days() << " days, " << T << " stages, " << atoms << " atoms\n";
  return 0;
}

int run_solve(const std::string& method, const std::string& config, const std::string& grid_arg, int passes,
              const std::string& out, const std::string& tables) {
  const ExperimentConfig c = load_experiment(config);
  const Model m = build_model(c);
  RunReport r;
  r.method = method;
  DescentResult d;
  if (method == "musdp") {
    const GridSpec g = grid_arg.empty() ? (c.musdp_grids.empty() ? GridSpec{} : c.musdp_grids.front())
                                        : parse_grid(grid_arg);
    r.setting = g.label();
    d = projected_descent(make_musdp_oracle(m, g, c.mu, c.dp_threads), m.instance.param_lo, m.instance.param_hi,
                          c.optimizer);
    if (!tables.empty()) {
      DPOptions opt;
      opt.mu = c.mu;
      opt.keep_tables = true;
      opt.threads = c.dp_threads;
      const StateGrid sg{g.soc, g.gen, m.instance.battery.peak};
      const auto res = backward_solve(m.instance, m.noise, d.best, sg,
                                      ControlGrid::uniform(g.controls, m.instance.battery.u_min, m.instance.battery.u_max),
                                      opt);
      std::ofstream t(tables);
      if (!t) throw std::runtime_error("cannot write " + tables);
      res.tables->write_csv(t, sg);
    }
  } else if (method == "ksddp") {
    const int k = passes > 0 ? passes : (c.ksddp_passes.empty() ? 80 : c.ksddp_passes.front());
    r.setting = std::to_string(k);
    d = projected_descent(make_ksddp_oracle(m, k, c.ksddp_seed), m.instance.param_lo, m.instance.param_hi,
                          c.optimizer);
  } else {
    throw std::invalid_argument("method must be musdp or ksddp");
  }
  fill_descent(r, d);
  write_text(out, report_to_json(r).dump(2) + "\n");
  std::cerr << method << " " << r.setting << ": " << d.iterations << " iterations, best " << d.best_value
            << (d.stalled ? " (stalled)" : "") << "\n";
  return 0;
}

int run_assess(const std::string& profile_path, const std::string& config, const std::string& out,
               const std::string& save_cuts, const std::string& load_cuts) {
  const ExperimentConfig c = load_experiment(config);
  const Model m = build_model(c);
  RunReport r;
  r.method = "baseline";
  r.setting = "p0";
  r.profile = CommitmentProfile(static_cast<std::size_t>(m.instance.horizon), 0.0);
  if (!profile_path.empty()) {
    const json j = read_json(profile_path);
    if (j.is_array()) {
      r.profile = j.get<CommitmentProfile>();
      r.method = "profile";
      r.setting = profile_path;
    } else {
      r.profile = j.at("profile").get<CommitmentProfile>();
      r.method = j.value("method", "profile");
      r.setting = j.value("setting", "");
      r.iterations = j.value("iterations", 0);
      r.seconds = j.value("time_s", 0.0);
      r.seconds_per_call = j.value("time_per_call_s", 0.0);
      r.objective_trace = j.value("objective_trace", std::vector<double>{});
      r.best_iteration = j.value("best_iteration", 0);
      r.stalled = j.value("stalled", false);
    }
  }
  if (!is_feasible(r.profile, m.instance)) throw std::invalid_argument("profile is outside the admissible box");
  if (!load_cuts.empty()) {
    const CutPool pool = load_cut_pool(load_cuts);
    if (pool.mode != SddpMode::Fixed || pool.profile != r.profile)
      throw std::invalid_argument("cut file was trained for a different profile");
    fill_assessment(r, assess_pool(pool, m.instance, m.noise, c.assessment));
  } else {
    CutPool pool;
    fill_assessment(r, assess(m.instance, m.noise, r.profile, c.assessment, &pool));
    if (!save_cuts.empty()) save_cut_pool(pool, save_cuts);
  }
  write_reports(out, {r});
  std::cerr << report_csv_row(r) << "\n";
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::ostringstream merged;
  merged << kReportHeader << '\n';
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) throw std::runtime_error(path + " is not a report file");
    while (std::getline(in, line))
      if (!line.empty()) merged << line << '\n';
  }
  write_text(out, merged.str());
  return 0;
}

int run_all(const std::string& config, const std::string& out) {
  const ExperimentConfig c = load_experiment(config);
  const auto rows = run_experiment(c, &std::cerr);
  write_reports(out, rows);
  for (const auto& r : rows)
    if (!r.ok()) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric multistage stochastic optimization of a battery commitment profile"};
  app.require_subcommand(1);

  std::string csv, out, config, method = "musdp", grid, profile, save_cuts, load_cuts, tables;
  int atoms = 10, horizon = 0, passes = 0;
  std::uint64_t seed = 1;
  double scale = 0.0, peak = 1.0;
  std::vector<std::string> inputs;

  auto* cal = app.add_subcommand("calibrate", "Fit AR(1) weights and quantized noise laws to a series CSV");
  cal->add_option("csv", csv, "one day per row, one stage per column")->required()->check(CLI::ExistingFile);
  cal->add_option("--atoms", atoms, "noise atoms per stage")->check(CLI::PositiveNumber);
  cal->add_option("--seed", seed, "k-means seed");
  cal->add_option("--horizon", horizon, "stages to fit (default: number of columns)");
  cal->add_option("--scale", scale, "multiplier on raw values; <= 0 normalizes the maximum to --peak");
  cal->add_option("--peak", peak, "plant peak power");
  cal->add_option("-o,--output", out, "noise model JSON")->required();

  auto* sol = app.add_subcommand("solve", "Optimize the commitment profile");
  sol->add_option("--method", method, "musdp or ksddp")->check(CLI::IsMember({"musdp", "ksddp"}));
  sol->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  sol->add_option("--grid", grid, "musdp grid as SOCxGEN,CONTROLS (default: first configured)");
  sol->add_option("--passes", passes, "ksddp passes per oracle call (default: first configured)");
  sol->add_option("--tables", tables, "musdp: dump value and gradient tables at p* as CSV");
  sol->add_option("-o,--output", out, "profile JSON")->required();

  auto* as = app.add_subcommand("assess", "SDDP lower bound and Monte-Carlo cost of a profile");
  as->add_option("--profile", profile, "profile JSON from solve, or a bare array (default: all zeros)");
  as->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  as->add_option("--save-cuts", save_cuts, "write the trained cut pool");
  as->add_option("--load-cuts", load_cuts, "reuse a cut pool instead of training");
  as->add_option("-o,--output", out, "report CSV (a JSON sidecar is written next to it)")->required();

  auto* rep = app.add_subcommand("report", "Merge report CSVs");
  rep->add_option("inputs", inputs, "report CSVs")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--output", out, "merged CSV (default: stdout)");

  auto* all = app.add_subcommand("run", "calibrate, solve and assess every configured implementation");
  all->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
  all->add_option("-o,--output", out, "report CSV (a JSON sidecar is written next to it)")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*cal) return run_calibrate(csv, atoms, seed, horizon, scale, peak, out);
    if (*sol) return run_solve(method, config, grid, passes, out, tables);
    if (*as) return run_assess(profile, config, out, save_cuts, load_cuts);
    if (*rep) return run_report(inputs, out);
    if (*all) return run_all(config, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
