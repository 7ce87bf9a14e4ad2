#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace zam {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpRow {
  std::vector<double> coeffs;
  char sense = '<';  // one of '<', '>', '='
  double rhs = 0.0;
};

// min cost'x  s.t. rows, 0 <= x <= upper (upper may be +inf).
struct LpProblem {
  std::vector<double> cost;
  std::vector<double> upper;
  std::vector<LpRow> rows;

  std::size_t num_vars() const { return cost.size(); }
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> x;
  // Duals of the rows as stored (equality convention): for a '>' row the
  // multiplier of a'x >= b is +row_dual, for a '<' row it is -row_dual.
  std::vector<double> row_dual;
  std::vector<double> reduced_cost;  // structural variables only
  long iterations = 0;
};

namespace detail {

// Dense two-phase simplex with implicit variable bounds and Bland's rule.
class Simplex {
 public:
  explicit Simplex(const LpProblem& p) : prob_(p) {
    m_ = p.rows.size();
    n_struct_ = p.num_vars();
    for (const auto& row : p.rows) {
      if (row.coeffs.size() != n_struct_)
        throw std::invalid_argument("LP row width mismatch");
      if (row.sense != '<' && row.sense != '>' && row.sense != '=')
        throw std::invalid_argument("LP row sense must be one of < > =");
    }
    build();
  }

  LpSolution solve() {
    LpSolution sol;
    // Phase 1: minimize the sum of artificials.
    std::vector<double> phase1_cost(ncols_, 0.0);
    for (std::size_t j = art_begin_; j < ncols_; ++j) phase1_cost[j] = 1.0;
    LpStatus st = run(phase1_cost, sol.iterations);
    if (st == LpStatus::IterationLimit) {
      sol.status = st;
      return sol;
    }
    const double scale = std::max(1.0, max_abs_rhs_);
    if (phase_obj(phase1_cost) > 1e-7 * scale) {
      sol.status = LpStatus::Infeasible;
      return sol;
    }
    drive_out_artificials();
    for (std::size_t j = art_begin_; j < ncols_; ++j) up_[j] = 0.0;

    // Phase 2: the real objective (artificials pinned at zero).
    std::vector<double> cost(ncols_, 0.0);
    for (std::size_t j = 0; j < n_struct_; ++j) cost[j] = prob_.cost[j];
    st = run(cost, sol.iterations);
    if (st != LpStatus::Optimal) {
      sol.status = st;
      return sol;
    }

    refactorize();
    recompute_basics();
    sol.status = LpStatus::Optimal;
    sol.x.assign(xval_.begin(), xval_.begin() + n_struct_);
    sol.objective = 0.0;
    for (std::size_t j = 0; j < n_struct_; ++j)
      sol.objective += prob_.cost[j] * sol.x[j];
    std::vector<double> y = duals(cost);
    sol.row_dual = y;
    sol.reduced_cost.resize(n_struct_);
    for (std::size_t j = 0; j < n_struct_; ++j) {
      double r = cost[j];
      for (std::size_t i = 0; i < m_; ++i) r -= y[i] * a(i, j);
      sol.reduced_cost[j] = r;
    }
    return sol;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  static constexpr double kPivTol = 1e-9;
  static constexpr long kMaxIter = 200000;
  enum class State : unsigned char { Basic, Lower, Upper };

  double a(std::size_t i, std::size_t j) const { return cols_[j * m_ + i]; }
  double& a(std::size_t i, std::size_t j) { return cols_[j * m_ + i]; }

  void build() {
    std::size_t n_slack = 0;
    for (const auto& row : prob_.rows)
      if (row.sense != '=') ++n_slack;
    slack_begin_ = n_struct_;
    art_begin_ = n_struct_ + n_slack;
    ncols_ = art_begin_ + m_;

    cols_.assign(ncols_ * m_, 0.0);
    up_.assign(ncols_, kInf);
    b_.resize(m_);
    max_abs_rhs_ = 0.0;
    for (std::size_t j = 0; j < n_struct_; ++j) up_[j] = prob_.upper[j];

    std::size_t slack = slack_begin_;
    for (std::size_t i = 0; i < m_; ++i) {
      const LpRow& row = prob_.rows[i];
      for (std::size_t j = 0; j < n_struct_; ++j) a(i, j) = row.coeffs[j];
      if (row.sense == '<')
        a(i, slack++) = 1.0;
      else if (row.sense == '>')
        a(i, slack++) = -1.0;
      b_[i] = row.rhs;
      max_abs_rhs_ = std::max(max_abs_rhs_, std::abs(row.rhs));
      a(i, art_begin_ + i) = row.rhs >= 0.0 ? 1.0 : -1.0;
    }

    state_.assign(ncols_, State::Lower);
    xval_.assign(ncols_, 0.0);
    basic_.resize(m_);
    binv_.assign(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t j = art_begin_ + i;
      basic_[i] = j;
      state_[j] = State::Basic;
      binv_[i * m_ + i] = a(i, j);  // diag(+-1) is its own inverse
      xval_[j] = std::abs(b_[i]);
    }
  }

  std::vector<double> duals(const std::vector<double>& cost) const {
    std::vector<double> y(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = cost[basic_[i]];
      if (cb == 0.0) continue;
      for (std::size_t k = 0; k < m_; ++k) y[k] += cb * binv_[i * m_ + k];
    }
    return y;
  }

  double phase_obj(const std::vector<double>& cost) const {
    double v = 0.0;
    for (std::size_t j = 0; j < ncols_; ++j) v += cost[j] * xval_[j];
    return v;
  }

  // Bland's rule: lowest-index eligible entering variable; among tied
  // leaving candidates the lowest variable index. Guarantees termination.
  LpStatus run(const std::vector<double>& cost, long& iterations) {
    const double cost_tol = 1e-9 * max_abs_cost(cost);
    long since_refactor = 0;
    while (true) {
      if (++iterations > kMaxIter) return LpStatus::IterationLimit;
      std::vector<double> y = duals(cost);
      std::size_t enter = ncols_;
      int dir = +1;
      for (std::size_t j = 0; j < ncols_; ++j) {
        if (state_[j] == State::Basic) continue;
        if (up_[j] <= 0.0) continue;  // fixed at zero (e.g. pinned artificial)
        double r = cost[j];
        for (std::size_t i = 0; i < m_; ++i) {
          const double aij = a(i, j);
          if (aij != 0.0) r -= y[i] * aij;
        }
        if (state_[j] == State::Lower && r < -cost_tol) {
          enter = j;
          dir = +1;
          break;
        }
        if (state_[j] == State::Upper && r > cost_tol) {
          enter = j;
          dir = -1;
          break;
        }
      }
      if (enter == ncols_) return LpStatus::Optimal;

      // direction of basics: x_B(t) = x_B - w * dir * t
      std::vector<double> w(m_, 0.0);
      for (std::size_t i = 0; i < m_; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < m_; ++k) {
          const double ak = a(k, enter);
          if (ak != 0.0) s += binv_[i * m_ + k] * ak;
        }
        w[i] = s;
      }

      // Ratio test over basic variables; the entering variable's own bound
      // acts as a fallback (bound flip, no basis change). Ties among basics
      // break on the lowest variable index (Bland).
      double t_best = kInf;
      std::size_t leave_row = m_;  // m_ means bound flip
      bool leave_to_upper = false;
      auto consider = [&](std::size_t i, double t, bool to_upper) {
        if (t < t_best - 1e-12 ||
            (t < t_best + 1e-12 &&
             (leave_row == m_ || basic_[i] < basic_[leave_row]))) {
          t_best = std::min(t, t_best);
          leave_row = i;
          leave_to_upper = to_upper;
        }
      };
      for (std::size_t i = 0; i < m_; ++i) {
        const double g = -w[i] * dir;
        const std::size_t jb = basic_[i];
        if (g < -kPivTol)
          consider(i, xval_[jb] / -g, false);
        else if (g > kPivTol && up_[jb] < kInf)
          consider(i, (up_[jb] - xval_[jb]) / g, true);
      }
      if (up_[enter] < kInf && up_[enter] < t_best - 1e-12) {
        t_best = up_[enter];
        leave_row = m_;
      }
      if (t_best == kInf) return LpStatus::Unbounded;
      t_best = std::max(t_best, 0.0);

      // apply the step
      xval_[enter] += dir * t_best;
      for (std::size_t i = 0; i < m_; ++i)
        xval_[basic_[i]] -= w[i] * dir * t_best;

      if (leave_row == m_) {
        // bound flip, basis unchanged
        state_[enter] = dir > 0 ? State::Upper : State::Lower;
        xval_[enter] = dir > 0 ? up_[enter] : 0.0;
        continue;
      }

      const std::size_t leaving = basic_[leave_row];
      state_[leaving] = leave_to_upper ? State::Upper : State::Lower;
      xval_[leaving] = leave_to_upper ? up_[leaving] : 0.0;
      basic_[leave_row] = enter;
      state_[enter] = State::Basic;

      // product-form update of the basis inverse
      const double piv = w[leave_row];
      if (std::abs(piv) < kPivTol)
        throw std::runtime_error("simplex: near-singular pivot");
      for (std::size_t k = 0; k < m_; ++k) binv_[leave_row * m_ + k] /= piv;
      for (std::size_t i = 0; i < m_; ++i) {
        if (i == leave_row) continue;
        const double f = w[i];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k)
          binv_[i * m_ + k] -= f * binv_[leave_row * m_ + k];
      }

      if (++since_refactor >= 128) {
        refactorize();
        recompute_basics();
        since_refactor = 0;
      }
    }
  }

  static double max_abs_cost(const std::vector<double>& cost) {
    double v = 1.0;
    for (double c : cost) v = std::max(v, std::abs(c));
    return v;
  }

  // Recompute the basis inverse from scratch (Gauss-Jordan with partial
  // pivoting) to flush accumulated pivot drift.
  void refactorize() {
    std::vector<double> mat(m_ * m_, 0.0), inv(m_ * m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      inv[i * m_ + i] = 1.0;
      for (std::size_t col = 0; col < m_; ++col)
        mat[i * m_ + col] = a(i, basic_[col]);
    }
    for (std::size_t col = 0; col < m_; ++col) {
      std::size_t piv = col;
      for (std::size_t i = col + 1; i < m_; ++i)
        if (std::abs(mat[i * m_ + col]) > std::abs(mat[piv * m_ + col]))
          piv = i;
      if (std::abs(mat[piv * m_ + col]) < 1e-12)
        throw std::runtime_error("simplex: singular basis in refactorize");
      if (piv != col)
        for (std::size_t k = 0; k < m_; ++k) {
          std::swap(mat[piv * m_ + k], mat[col * m_ + k]);
          std::swap(inv[piv * m_ + k], inv[col * m_ + k]);
        }
      const double d = mat[col * m_ + col];
      for (std::size_t k = 0; k < m_; ++k) {
        mat[col * m_ + k] /= d;
        inv[col * m_ + k] /= d;
      }
      for (std::size_t i = 0; i < m_; ++i) {
        if (i == col) continue;
        const double f = mat[i * m_ + col];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k) {
          mat[i * m_ + k] -= f * mat[col * m_ + k];
          inv[i * m_ + k] -= f * inv[col * m_ + k];
        }
      }
    }
    binv_ = inv;
  }

  void recompute_basics() {
    std::vector<double> rhs = b_;
    for (std::size_t j = 0; j < ncols_; ++j) {
      if (state_[j] == State::Basic) continue;
      const double v = state_[j] == State::Upper ? up_[j] : 0.0;
      xval_[j] = v;
      if (v == 0.0) continue;
      for (std::size_t i = 0; i < m_; ++i) rhs[i] -= a(i, j) * v;
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < m_; ++k) s += binv_[i * m_ + k] * rhs[k];
      xval_[basic_[i]] = s;
    }
  }

  void drive_out_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
      if (basic_[i] < art_begin_) continue;
      // degenerate pivot on any usable non-artificial column
      std::size_t enter = ncols_;
      double best = kPivTol;
      for (std::size_t j = 0; j < art_begin_; ++j) {
        if (state_[j] == State::Basic) continue;
        double wi = 0.0;
        for (std::size_t k = 0; k < m_; ++k) {
          const double ak = a(k, j);
          if (ak != 0.0) wi += binv_[i * m_ + k] * ak;
        }
        if (std::abs(wi) > best) {
          best = std::abs(wi);
          enter = j;
        }
      }
      if (enter == ncols_) continue;  // redundant row, artificial stays at 0
      std::vector<double> w(m_, 0.0);
      for (std::size_t r = 0; r < m_; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < m_; ++k) {
          const double ak = a(k, enter);
          if (ak != 0.0) s += binv_[r * m_ + k] * ak;
        }
        w[r] = s;
      }
      const std::size_t leaving = basic_[i];
      state_[leaving] = State::Lower;
      xval_[leaving] = 0.0;
      basic_[i] = enter;
      state_[enter] = State::Basic;
      const double piv = w[i];
      for (std::size_t k = 0; k < m_; ++k) binv_[i * m_ + k] /= piv;
      for (std::size_t r = 0; r < m_; ++r) {
        if (r == i) continue;
        const double f = w[r];
        if (f == 0.0) continue;
        for (std::size_t k = 0; k < m_; ++k)
          binv_[r * m_ + k] -= f * binv_[i * m_ + k];
      }
      recompute_basics();
    }
  }

  const LpProblem& prob_;
  std::size_t m_ = 0, n_struct_ = 0, slack_begin_ = 0, art_begin_ = 0,
              ncols_ = 0;
  std::vector<double> cols_;  // column-major m_ x ncols_
  std::vector<double> b_;
  std::vector<double> up_;
  std::vector<double> binv_;  // row-major m_ x m_
  std::vector<double> xval_;
  std::vector<std::size_t> basic_;
  std::vector<State> state_;
  double max_abs_rhs_ = 0.0;
};

}  // namespace detail

inline LpSolution solve_lp(const LpProblem& problem) {
  detail::Simplex solver(problem);
  return solver.solve();
}

}  // namespace zam
