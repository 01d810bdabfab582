#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmsop/core_model.hpp"

namespace pmsop {

/// Generated power, one row per day and one column per stage (MW).
struct HistoricalSeries {
  std::vector<std::vector<double>> days;

  std::size_t num_days() const { return days.size(); }
  std::size_t num_stages() const { return days.empty() ? 0 : days.front().size(); }
};

/// Finite distribution of one noise variable.
struct DiscreteDistribution {
  std::vector<double> values;
  std::vector<double> probs;

  std::size_t size() const { return values.size(); }

  double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += values[i] * probs[i];
    return m;
  }

  void validate() const {
    if (values.empty() || values.size() != probs.size())
      throw std::invalid_argument("distribution support must be nonempty and match its probabilities");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) throw std::invalid_argument("non-finite atom");
      if (!(probs[i] > 0)) throw std::invalid_argument("atom probabilities must be positive");
      total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("atom probabilities must sum to 1");
  }
};

/// Stagewise-independent noise. stages[t] is the law of the noise revealed
/// during [t, t+1), i.e. W_{t+1}.
struct NoiseModel {
  std::vector<DiscreteDistribution> stages;

  std::size_t horizon() const { return stages.size(); }

  void validate() const {
    for (const auto& d : stages) d.validate();
  }

  /// Single-atom model with all noise equal to zero.
  static NoiseModel deterministic(int horizon) {
    NoiseModel m;
    m.stages.assign(static_cast<std::size_t>(horizon), DiscreteDistribution{{0.0}, {1.0}});
    return m;
  }
};

namespace detail {

inline void require_finite_series(const HistoricalSeries& s) {
  for (const auto& row : s.days) {
    if (row.size() != s.num_stages()) throw std::invalid_argument("ragged historical series");
    for (double v : row)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite historical value");
  }
}

/// Regressor/response pairs for transition t. With T columns the last
/// transition pairs a day's final column with the next day's first column.
inline void transition_pairs(const HistoricalSeries& s, std::size_t t, std::vector<double>& x,
                             std::vector<double>& y) {
  x.clear();
  y.clear();
  const std::size_t cols = s.num_stages();
  for (std::size_t d = 0; d < s.num_days(); ++d) {
    if (t + 1 < cols) {
      x.push_back(s.days[d][t]);
      y.push_back(s.days[d][t + 1]);
    } else if (d + 1 < s.num_days()) {
      x.push_back(s.days[d][t]);
      y.push_back(s.days[d + 1][0]);
    }
  }
}

}  // namespace detail

/// Number of AR(1) transitions a series supports when it is used to calibrate
/// a horizon-`horizon` model: T columns (wrapping to the next day) or T + 1 columns.
inline std::size_t transitions_for(const HistoricalSeries& s, int horizon) {
  const auto T = static_cast<std::size_t>(horizon);
  if (s.num_stages() != T && s.num_stages() != T + 1)
    throw std::invalid_argument("series must have T or T + 1 columns");
  return T;
}

/// Per-stage ordinary least squares of column t+1 on column t with intercept.
/// A constant regressor yields alpha = 0 and beta = mean of the response.
inline AR1Weights calibrate_ar1(const HistoricalSeries& series, int horizon) {
  if (series.num_days() < 2) throw std::invalid_argument("calibration needs at least 2 days");
  detail::require_finite_series(series);
  const std::size_t T = transitions_for(series, horizon);
  AR1Weights w;
  w.alpha.resize(T);
  w.beta.resize(T);
  std::vector<double> x, y;
  for (std::size_t t = 0; t < T; ++t) {
    detail::transition_pairs(series, t, x, y);
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
    }
    const double scale = std::max(1.0, mx * mx);
    if (sxx <= 1e-14 * scale * n) {
      w.alpha[t] = 0.0;
      w.beta[t] = my;
    } else {
      w.alpha[t] = sxy / sxx;
      w.beta[t] = my - w.alpha[t] * mx;
    }
  }
  return w;
}

/// r[t][d] = x_{d,t+1} - alpha_t x_{d,t} - beta_t.
inline std::vector<std::vector<double>> residuals(const HistoricalSeries& series, const AR1Weights& weights) {
  detail::require_finite_series(series);
  const std::size_t T = weights.size();
  if (series.num_stages() != T && series.num_stages() != T + 1)
    throw std::invalid_argument("weights and series disagree on the horizon");
  std::vector<std::vector<double>> out(T);
  std::vector<double> x, y;
  for (std::size_t t = 0; t < T; ++t) {
    detail::transition_pairs(series, t, x, y);
    out[t].resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[t][i] = y[i] - weights.alpha[t] * x[i] - weights.beta[t];
  }
  return out;
}

struct Quantization {
  DiscreteDistribution distribution;
  bool fewer_atoms = false;          // fewer distinct samples than requested atoms
  std::vector<double> sse_trace;     // within-cluster sum of squares after each sweep
  int sweeps = 0;
};

/// One-dimensional Lloyd quantization into at most `atoms` atoms.
///
/// Samples are sorted first, so the result does not depend on input order.
/// Centroids start at evenly spaced sample quantiles; an empty cluster is
/// re-seeded at the sample farthest from its centroid (the seed breaks ties
/// between equally far samples). Stops on stable assignments or after
/// `max_sweeps` sweeps.
inline Quantization quantize_kmeans(std::vector<double> samples, int atoms, std::uint64_t seed,
                                    int max_sweeps = 100) {
  if (atoms < 1) throw std::invalid_argument("atom count must be >= 1");
  if (samples.empty()) throw std::invalid_argument("no samples to quantize");
  for (double v : samples)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  Quantization q;
  std::vector<double> distinct;
  std::unique_copy(samples.begin(), samples.end(), std::back_inserter(distinct));
  if (distinct.size() <= static_cast<std::size_t>(atoms)) {
    q.fewer_atoms = distinct.size() < static_cast<std::size_t>(atoms);
    for (double v : distinct) {
      const auto [lo, hi] = std::equal_range(samples.begin(), samples.end(), v);
      q.distribution.values.push_back(v);
      q.distribution.probs.push_back(static_cast<double>(hi - lo) * inv_n);
    }
    q.sse_trace.push_back(0.0);
    return q;
  }

  const auto K = static_cast<std::size_t>(atoms);
  std::vector<double> centroid(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto idx = static_cast<std::size_t>((static_cast<double>(k) + 0.5) * static_cast<double>(n) /
                                              static_cast<double>(K));
    centroid[k] = samples[std::min(idx, n - 1)];
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> assign(n, K), count(K);
  std::vector<double> sum(K);

  auto nearest = [&](double v) {
    std::size_t best = 0;
    double bd = std::abs(v - centroid[0]);
    for (std::size_t k = 1; k < K; ++k) {
      const double dk = std::abs(v - centroid[k]);
      if (dk < bd) {
        bd = dk;
        best = k;
      }
    }
    return best;
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = nearest(samples[i]);
      if (k != assign[i]) {
        assign[i] = k;
        changed = true;
      }
    }
    // Re-seed empty clusters, one at a time, at the currently worst-served sample.
    for (;;) {
      std::fill(count.begin(), count.end(), 0);
      for (std::size_t i = 0; i < n; ++i) ++count[assign[i]];
      const auto empty = std::find(count.begin(), count.end(), std::size_t{0});
      if (empty == count.end()) break;
      double worst = -1.0;
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[assign[i]] < 2) continue;
        const double d = std::abs(samples[i] - centroid[assign[i]]);
        if (d > worst) {
          worst = d;
          candidates.assign(1, i);
        } else if (d == worst) {
          candidates.push_back(i);
        }
      }
      const std::size_t pick = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
      const auto k = static_cast<std::size_t>(empty - count.begin());
      centroid[k] = samples[pick];
      assign[pick] = k;
      changed = true;
    }
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) sum[assign[i]] += samples[i];
    for (std::size_t k = 0; k < K; ++k) centroid[k] = sum[k] / static_cast<double>(count[k]);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += (samples[i] - centroid[assign[i]]) * (samples[i] - centroid[assign[i]]);
    q.sse_trace.push_back(sse);
    q.sweeps = sweep + 1;
    if (!changed) break;
  }

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return centroid[a] < centroid[b]; });
  double total = 0.0;
  for (std::size_t k : order) {
    q.distribution.values.push_back(centroid[k]);
    q.distribution.probs.push_back(static_cast<double>(count[k]) * inv_n);
    total += q.distribution.probs.back();
  }
  for (double& p : q.distribution.probs) p /= total;
  return q;
}

/// Draws one value from a finite distribution.
template <class Rng>
double sample(const DiscreteDistribution& d, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    acc += d.probs[i];
    if (u < acc) return d.values[i];
  }
  return d.values.back();
}

/// Noise path (w_1, ..., w_T) with independent draws per stage.
template <class Rng>
std::vector<double> sample_scenario(const NoiseModel& model, Rng& rng) {
  std::vector<double> path(model.horizon());
  for (std::size_t t = 0; t < path.size(); ++t) path[t] = sample(model.stages[t], rng);
  return path;
}

/// Generator seeded per scenario index so that scenario i is the same no
/// matter how a batch is split.
inline std::mt19937_64 scenario_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct Calibration {
  AR1Weights weights;
  NoiseModel noise;
  std::vector<int> fewer_atom_stages;
};

/// Regression then per-stage quantization of the residuals.
inline Calibration calibrate(const HistoricalSeries& series, int horizon, int atoms, std::uint64_t seed) {
  Calibration c;
  c.weights = calibrate_ar1(series, horizon);
  const auto res = residuals(series, c.weights);
  c.noise.stages.resize(res.size());
  for (std::size_t t = 0; t < res.size(); ++t) {
    auto q = quantize_kmeans(res[t], atoms, seed + t);
    if (q.fewer_atoms) c.fewer_atom_stages.push_back(static_cast<int>(t));
    c.noise.stages[t] = std::move(q.distribution);
  }
  return c;
}

/// Synthetic photovoltaic days: a half-sine daylight profile scaled by a daily
/// clearness factor, with slot-level noise, clipped to [0, peak].
inline HistoricalSeries synthetic_series(int days, int stages_per_day, double peak, std::uint64_t seed,
                                         double sunrise_hour = 6.0, double sunset_hour = 18.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> clearness(0.35, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.06);
  const double slot_hours = 24.0 / static_cast<double>(stages_per_day);
  HistoricalSeries s;
  s.days.resize(static_cast<std::size_t>(days));
  for (auto& row : s.days) {
    const double clear = clearness(rng);
    row.resize(static_cast<std::size_t>(stages_per_day));
    for (int t = 0; t < stages_per_day; ++t) {
      const double hour = (static_cast<double>(t) + 0.5) * slot_hours;
      double v = 0.0;
      if (hour > sunrise_hour && hour < sunset_hour) {
        const double shape = std::sin(M_PI * (hour - sunrise_hour) / (sunset_hour - sunrise_hour));
        v = std::clamp(peak * clear * shape * (1.0 + jitter(rng)), 0.0, peak);
      }
      row[static_cast<std::size_t>(t)] = v;
    }
  }
  return s;
}

/// Reads one day per line, comma separated; a non-numeric first line is
/// treated as a header. `scale` <= 0 rescales so the largest value equals `peak`.
inline HistoricalSeries read_series_csv(const std::string& path, double scale, double peak) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  HistoricalSeries s;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error("non-numeric cell in " + path);
    }
    first = false;
    s.days.push_back(std::move(row));
  }
  detail::require_finite_series(s);
  double factor = scale;
  if (factor <= 0) {
    double mx = 0.0;
    for (const auto& row : s.days)
      for (double v : row) mx = std::max(mx, v);
    factor = mx > 0 ? peak / mx : 1.0;
  }
  for (auto& row : s.days)
    for (double& v : row) v *= factor;
  return s;
}

}  // namespace pmsop
