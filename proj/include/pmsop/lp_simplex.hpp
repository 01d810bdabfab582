#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pmsop {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSense { LessEqual, Equal, GreaterEqual };

/// min c.x + offset  s.t.  rows (<=, =, >=),  lower <= x <= upper.
struct LinearProgram {
  struct Row {
    std::vector<std::pair<int, double>> terms;
    RowSense sense = RowSense::LessEqual;
    double rhs = 0.0;
  };

  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;
  double cost_offset = 0.0;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  int add_variable(double lo, double hi, double c = 0.0) {
    lower.push_back(lo);
    upper.push_back(hi);
    cost.push_back(c);
    return num_vars() - 1;
  }

  int add_row(std::vector<std::pair<int, double>> terms, RowSense sense, double rhs) {
    rows.push_back({std::move(terms), sense, rhs});
    return num_rows() - 1;
  }

  void validate() const {
    const auto n = cost.size();
    if (lower.size() != n || upper.size() != n) throw std::invalid_argument("bound vectors do not match the cost");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cost[j])) throw std::invalid_argument("non-finite cost");
      if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j] || lower[j] == kInf ||
          upper[j] == -kInf)
        throw std::invalid_argument("invalid variable bounds");
    }
    for (const auto& r : rows) {
      if (!std::isfinite(r.rhs)) throw std::invalid_argument("non-finite right-hand side");
      for (const auto& [j, a] : r.terms) {
        if (j < 0 || j >= num_vars()) throw std::invalid_argument("row references an unknown variable");
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite coefficient");
      }
    }
  }

  /// Human-readable dump with a fixed column order.
  void write(std::ostream& out) const {
    const auto flags = out.flags();
    out << std::setprecision(17) << "minimize";
    for (int j = 0; j < num_vars(); ++j) out << ' ' << cost[static_cast<std::size_t>(j)] << "*x" << j;
    out << " + " << cost_offset << "\nsubject to\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << "  r" << i << ':';
      for (const auto& [j, a] : rows[i].terms) out << ' ' << a << "*x" << j;
      out << (rows[i].sense == RowSense::LessEqual ? " <= " : rows[i].sense == RowSense::Equal ? " = " : " >= ")
          << rows[i].rhs << '\n';
    }
    out << "bounds\n";
    for (int j = 0; j < num_vars(); ++j)
      out << "  " << lower[static_cast<std::size_t>(j)] << " <= x" << j << " <= " << upper[static_cast<std::size_t>(j)]
          << '\n';
    out.flags(flags);
  }
};

enum class LPStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LPStatus s) {
  switch (s) {
    case LPStatus::Optimal: return "optimal";
    case LPStatus::Infeasible: return "infeasible";
    case LPStatus::Unbounded: return "unbounded";
  }
  return "?";
}

/// Duals follow "dual = d(optimum)/d(rhs)": nonpositive on <= rows and
/// nonnegative on >= rows of a minimization. reduced_costs = c - A^T y.
struct LPSolution {
  LPStatus status = LPStatus::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> row_duals;
  std::vector<double> reduced_costs;
  std::vector<int> basis;  // sorted internal column ids of the final basis
  int iterations = 0;
};

struct SimplexOptions {
  double pivot_tol = 1e-9;
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  int degenerate_switch = 50;  // consecutive degenerate pivots before Bland's rule
};

namespace detail {

/// Dense Gaussian elimination with partial pivoting; solves M z = r in place (M is n x n row-major).
inline void dense_solve(std::vector<double> M, std::vector<double>& r, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < n; ++i)
      if (std::abs(M[i * n + c]) > std::abs(M[piv * n + c])) piv = i;
    if (M[piv * n + c] == 0.0) throw std::runtime_error("singular basis");
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(M[c * n + k], M[piv * n + k]);
      std::swap(r[c], r[piv]);
    }
    const double inv = 1.0 / M[c * n + c];
    for (std::size_t i = c + 1; i < n; ++i) {
      const double f = M[i * n + c] * inv;
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) M[i * n + k] -= f * M[c * n + k];
      r[i] -= f * r[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double s = r[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= M[c * n + k] * r[k];
    r[c] = s / M[c * n + c];
  }
}

/// Bounded-variable primal simplex on a dense tableau.
///
/// Columns: structural variables, one slack per inequality row, then the
/// artificials needed to start phase 1. Every row reads A_i x + s_i (+ a_i) = b_i.
class DenseSimplex {
 public:
  DenseSimplex(const LinearProgram& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {}

  LPSolution run() {
    setup();
    LPSolution sol;
    if (!iterate()) {  // phase 1 cannot be unbounded
      throw std::runtime_error("simplex phase 1 reported an unbounded ray");
    }
    double infeas = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      if (is_artificial(basis_[i])) infeas += beta_[i];
    double scale = 1.0;
    for (const auto& r : lp_.rows) scale = std::max(scale, std::abs(r.rhs));
    if (infeas > opt_.feasibility_tol * scale * static_cast<double>(std::max<std::size_t>(1, m_))) {
      sol.status = LPStatus::Infeasible;
      sol.iterations = iterations_;
      return sol;
    }
    drive_out_artificials();
    for (std::size_t j = first_artificial_; j < ncols_; ++j) hi_[j] = 0.0;
    std::fill(c_.begin(), c_.end(), 0.0);
    for (std::size_t j = 0; j < n_; ++j) c_[j] = lp_.cost[j];
    price_all();
    if (!iterate()) {
      sol.status = LPStatus::Unbounded;
      sol.iterations = iterations_;
      return sol;
    }
    finish(sol);
    return sol;
  }

 private:
  enum class Status : unsigned char { Basic, AtLower, AtUpper, Free };

  bool is_artificial(std::size_t j) const { return j >= first_artificial_; }

  double nonbasic_value(std::size_t j) const {
    switch (status_[j]) {
      case Status::AtLower: return lo_[j];
      case Status::AtUpper: return hi_[j];
      default: return 0.0;
    }
  }

  double& tab(std::size_t i, std::size_t j) { return tab_[i * ncols_ + j]; }

  void setup() {
    lp_.validate();
    n_ = lp_.cost.size();
    m_ = lp_.rows.size();
    // Column layout and bounds.
    lo_.assign(lp_.lower.begin(), lp_.lower.end());
    hi_.assign(lp_.upper.begin(), lp_.upper.end());
    slack_of_row_.assign(m_, npos);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto sense = lp_.rows[i].sense;
      if (sense == RowSense::Equal) continue;
      slack_of_row_[i] = lo_.size();
      lo_.push_back(sense == RowSense::LessEqual ? 0.0 : -kInf);
      hi_.push_back(sense == RowSense::LessEqual ? kInf : 0.0);
    }
    first_artificial_ = lo_.size();
    status_.assign(first_artificial_, Status::AtLower);
    for (std::size_t j = 0; j < first_artificial_; ++j) {
      if (std::isfinite(lo_[j])) status_[j] = Status::AtLower;
      else if (std::isfinite(hi_[j])) status_[j] = Status::AtUpper;
      else status_[j] = Status::Free;
    }
    for (std::size_t i = 0; i < m_; ++i)
      if (slack_of_row_[i] != npos) status_[slack_of_row_[i]] = std::isfinite(lo_[slack_of_row_[i]]) ? Status::AtLower : Status::AtUpper;

    // Residuals with every structural variable at its starting value.
    std::vector<double> resid(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      double r = lp_.rows[i].rhs;
      for (const auto& [j, a] : lp_.rows[i].terms) r -= a * nonbasic_value(static_cast<std::size_t>(j));
      resid[i] = r;
    }
    basis_.assign(m_, npos);
    beta_.assign(m_, 0.0);
    art_sign_.clear();
    std::vector<std::size_t> art_row;
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t s = slack_of_row_[i];
      if (s != npos && resid[i] >= lo_[s] && resid[i] <= hi_[s]) {
        basis_[i] = s;
        status_[s] = Status::Basic;
        beta_[i] = resid[i];
      } else {
        art_row.push_back(i);
        art_sign_.push_back(resid[i] >= 0 ? 1.0 : -1.0);
      }
    }
    ncols_ = first_artificial_ + art_row.size();
    lo_.resize(ncols_, 0.0);
    hi_.resize(ncols_, kInf);
    status_.resize(ncols_, Status::Basic);
    c_.assign(ncols_, 0.0);
    for (std::size_t k = 0; k < art_row.size(); ++k) {
      const std::size_t i = art_row[k];
      basis_[i] = first_artificial_ + k;
      beta_[i] = std::abs(resid[i]);
      c_[first_artificial_ + k] = 1.0;
    }

    // Tableau = B^-1 [A | S | Art] with B diagonal (+1 for slacks, sign for artificials).
    tab_.assign(m_ * ncols_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const double scale = is_artificial(basis_[i]) ? art_sign_[basis_[i] - first_artificial_] : 1.0;
      for (const auto& [j, a] : lp_.rows[i].terms) tab(i, static_cast<std::size_t>(j)) += a / scale;
      if (slack_of_row_[i] != npos) tab(i, slack_of_row_[i]) = 1.0 / scale;
    }
    for (std::size_t k = 0; k < art_row.size(); ++k) tab(art_row[k], first_artificial_ + k) = 1.0;
    art_rows_ = std::move(art_row);
    price_all();
  }

  void price_all() {
    d_.assign(c_.begin(), c_.end());
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = c_[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &tab_[i * ncols_];
      for (std::size_t j = 0; j < ncols_; ++j) d_[j] -= cb * row[j];
    }
    for (std::size_t i = 0; i < m_; ++i) d_[basis_[i]] = 0.0;
  }

  /// Entering column and direction (+1 increase, -1 decrease); npos when optimal.
  std::pair<std::size_t, double> choose_entering(bool bland) const {
    std::size_t best = npos;
    double best_score = 0.0, best_dir = 0.0;
    for (std::size_t j = 0; j < ncols_; ++j) {
      if (status_[j] == Status::Basic || lo_[j] == hi_[j]) continue;
      const double d = d_[j];
      double dir = 0.0;
      if (status_[j] == Status::AtLower && d < -opt_.optimality_tol) dir = 1.0;
      else if (status_[j] == Status::AtUpper && d > opt_.optimality_tol) dir = -1.0;
      else if (status_[j] == Status::Free && std::abs(d) > opt_.optimality_tol) dir = d < 0 ? 1.0 : -1.0;
      if (dir == 0.0) continue;
      if (bland) return {j, dir};
      if (std::abs(d) > best_score) {
        best_score = std::abs(d);
        best = j;
        best_dir = dir;
      }
    }
    return {best, best_dir};
  }

  void pivot(std::size_t r, std::size_t j) {
    double* prow = &tab_[r * ncols_];
    const double inv = 1.0 / prow[j];
    for (std::size_t k = 0; k < ncols_; ++k) prow[k] *= inv;
    prow[j] = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[i * ncols_];
      const double f = row[j];
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < ncols_; ++k) row[k] -= f * prow[k];
      row[j] = 0.0;
    }
    const double f = d_[j];
    if (f != 0.0)
      for (std::size_t k = 0; k < ncols_; ++k) d_[k] -= f * prow[k];
    d_[j] = 0.0;
    basis_[r] = j;
  }

  /// Runs simplex iterations on the current costs. Returns false on an unbounded ray.
  bool iterate() {
    int degenerate_run = 0;
    const long limit = 200L * static_cast<long>(m_ + ncols_) + 1000;
    for (;;) {
      if (iterations_ > limit) throw std::runtime_error("simplex iteration limit reached");
      const bool bland = degenerate_run >= opt_.degenerate_switch;
      const auto [j, dir] = choose_entering(bland);
      if (j == npos) return true;

      double step = kInf;
      std::size_t leave = npos;
      double leave_alpha = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double alpha = tab_[i * ncols_ + j] * dir;
        const std::size_t b = basis_[i];
        double ratio;
        if (alpha > opt_.pivot_tol && std::isfinite(lo_[b])) ratio = std::max(0.0, (beta_[i] - lo_[b]) / alpha);
        else if (alpha < -opt_.pivot_tol && std::isfinite(hi_[b])) ratio = std::max(0.0, (hi_[b] - beta_[i]) / -alpha);
        else continue;
        const bool better = ratio < step - 1e-12 ||
                            (ratio <= step + 1e-12 && (bland ? (leave == npos || b < basis_[leave])
                                                             : std::abs(alpha) > std::abs(leave_alpha)));
        if (better) {
          step = ratio;
          leave = i;
          leave_alpha = alpha;
        }
      }
      const double range = hi_[j] - lo_[j];
      const bool flip = std::isfinite(range) && range <= step;
      if (flip) step = range;
      if (!std::isfinite(step)) return false;

      ++iterations_;
      degenerate_run = step <= 1e-12 ? degenerate_run + 1 : 0;
      for (std::size_t i = 0; i < m_; ++i) beta_[i] -= step * dir * tab_[i * ncols_ + j];
      if (flip) {
        status_[j] = dir > 0 ? Status::AtUpper : Status::AtLower;
        continue;
      }
      const double entering_value = nonbasic_value(j) + dir * step;
      const std::size_t out = basis_[leave];
      status_[out] = leave_alpha > 0 ? Status::AtLower : Status::AtUpper;
      beta_[leave] = entering_value;
      status_[j] = Status::Basic;
      pivot(leave, j);
    }
  }

  void drive_out_artificials() {
    for (std::size_t r = 0; r < m_; ++r) {
      if (!is_artificial(basis_[r])) continue;
      std::size_t best = npos;
      double best_abs = 1e-9;
      for (std::size_t j = 0; j < first_artificial_; ++j) {
        if (status_[j] == Status::Basic) continue;
        const double a = std::abs(tab_[r * ncols_ + j]);
        if (a > best_abs) {
          best_abs = a;
          best = j;
        }
      }
      if (best == npos) continue;  // redundant row; the artificial stays basic at zero
      const double alpha = tab_[r * ncols_ + best];
      const double step = beta_[r] / alpha;
      for (std::size_t i = 0; i < m_; ++i) beta_[i] -= step * tab_[i * ncols_ + best];
      const double entering_value = nonbasic_value(best) + step;
      status_[basis_[r]] = Status::AtLower;
      beta_[r] = entering_value;
      status_[best] = Status::Basic;
      pivot(r, best);
    }
  }

  void finish(LPSolution& sol) {
    sol.status = LPStatus::Optimal;
    sol.iterations = iterations_;
    // Refactor the final basis to clean up accumulated round-off.
    std::vector<double> x(ncols_, 0.0);
    for (std::size_t j = 0; j < ncols_; ++j)
      if (status_[j] != Status::Basic) x[j] = nonbasic_value(j);
    std::vector<double> dense(m_ * n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i)
      for (const auto& [k, a] : lp_.rows[i].terms) dense[i * n_ + static_cast<std::size_t>(k)] += a;
    auto col = [&](std::size_t j, std::size_t i) -> double {
      if (j < n_) return dense[i * n_ + j];
      if (j < first_artificial_) return slack_of_row_[i] == j ? 1.0 : 0.0;
      return art_rows_[j - first_artificial_] == i ? art_sign_[j - first_artificial_] : 0.0;
    };
    if (m_ > 0) {
      std::vector<double> B(m_ * m_), BT(m_ * m_);
      for (std::size_t i = 0; i < m_; ++i)
        for (std::size_t r = 0; r < m_; ++r) {
          B[i * m_ + r] = col(basis_[r], i);
          BT[r * m_ + i] = B[i * m_ + r];
        }
      std::vector<double> rhs(m_);
      for (std::size_t i = 0; i < m_; ++i) {
        double v = lp_.rows[i].rhs;
        for (std::size_t j = 0; j < ncols_; ++j)
          if (status_[j] != Status::Basic && x[j] != 0.0) v -= col(j, i) * x[j];
        rhs[i] = v;
      }
      dense_solve(B, rhs, m_);
      for (std::size_t r = 0; r < m_; ++r) x[basis_[r]] = rhs[r];
      std::vector<double> y(m_);
      for (std::size_t r = 0; r < m_; ++r) y[r] = basis_[r] < n_ ? lp_.cost[basis_[r]] : 0.0;
      dense_solve(BT, y, m_);
      sol.row_duals = std::move(y);
    }
    sol.x.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n_));
    for (std::size_t j = 0; j < n_; ++j) sol.x[j] = std::clamp(sol.x[j], lp_.lower[j], lp_.upper[j]);
    sol.reduced_costs.assign(lp_.cost.begin(), lp_.cost.end());
    for (std::size_t i = 0; i < m_; ++i)
      for (const auto& [k, a] : lp_.rows[i].terms) sol.reduced_costs[static_cast<std::size_t>(k)] -= a * sol.row_duals[i];
    sol.objective = lp_.cost_offset;
    for (std::size_t j = 0; j < n_; ++j) sol.objective += lp_.cost[j] * sol.x[j];
    sol.basis.assign(basis_.begin(), basis_.end());
    std::sort(sol.basis.begin(), sol.basis.end());
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  const LinearProgram& lp_;
  SimplexOptions opt_;
  std::size_t n_ = 0, m_ = 0, ncols_ = 0, first_artificial_ = 0;
  std::vector<double> lo_, hi_, c_, d_, beta_, tab_, art_sign_;
  std::vector<std::size_t> basis_, slack_of_row_, art_rows_;
  std::vector<Status> status_;
  int iterations_ = 0;
};

}  // namespace detail

/// Two-phase bounded-variable primal simplex. Dantzig pricing, switching to
/// Bland's rule after a run of degenerate pivots.
inline LPSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  return detail::DenseSimplex(lp, opt).run();
}

struct KKTResiduals {
  double primal = 0.0;         // max bound or row violation
  double dual = 0.0;           // max sign violation of duals and reduced costs
  double gap = 0.0;            // |primal objective - dual objective|
  double complementarity = 0.0;
};

/// Optimality certificate residuals of an Optimal solution.
inline KKTResiduals kkt_residuals(const LinearProgram& lp, const LPSolution& s) {
  KKTResiduals r;
  const auto n = static_cast<std::size_t>(lp.num_vars());
  for (std::size_t j = 0; j < n; ++j) {
    r.primal = std::max({r.primal, lp.lower[j] - s.x[j], s.x[j] - lp.upper[j]});
    const double d = s.reduced_costs[j];
    const double slack_lo = s.x[j] - lp.lower[j];  // +inf for free below
    const double slack_hi = lp.upper[j] - s.x[j];
    if (d > 0) {
      if (!std::isfinite(lp.lower[j])) r.dual = std::max(r.dual, d);
      else r.complementarity = std::max(r.complementarity, d * slack_lo);
    } else if (d < 0) {
      if (!std::isfinite(lp.upper[j])) r.dual = std::max(r.dual, -d);
      else r.complementarity = std::max(r.complementarity, -d * slack_hi);
    }
  }
  double dual_obj = lp.cost_offset;
  for (std::size_t i = 0; i < lp.rows.size(); ++i) {
    const auto& row = lp.rows[i];
    double ax = 0.0;
    for (const auto& [j, a] : row.terms) ax += a * s.x[static_cast<std::size_t>(j)];
    const double y = s.row_duals[i];
    switch (row.sense) {
      case RowSense::LessEqual:
        r.primal = std::max(r.primal, ax - row.rhs);
        r.dual = std::max(r.dual, y);
        break;
      case RowSense::GreaterEqual:
        r.primal = std::max(r.primal, row.rhs - ax);
        r.dual = std::max(r.dual, -y);
        break;
      case RowSense::Equal: r.primal = std::max(r.primal, std::abs(ax - row.rhs)); break;
    }
    r.complementarity = std::max(r.complementarity, std::abs(y * (row.rhs - ax)));
    dual_obj += y * row.rhs;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const double d = s.reduced_costs[j];
    if (d > 0 && std::isfinite(lp.lower[j])) dual_obj += d * lp.lower[j];
    else if (d < 0 && std::isfinite(lp.upper[j])) dual_obj += d * lp.upper[j];
  }
  r.gap = std::abs(s.objective - dual_obj);
  return r;
}

}  // namespace pmsop
