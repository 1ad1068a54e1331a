#pragma once

// Exact linear separability through the origin.
//
// A labelling is strictly separable iff some w satisfies sign_i * <w, z_i> >= 1
// for every point. By Gordan's alternative this fails exactly when the origin
// lies in the convex hull of the signed points v_i = sign_i * z_i. The hull
// test is the LP
//
//     find y >= 0  with  sum_i y_i v_i / |v_i| = 0,  sum_i y_i = 1
//
// whose variables are bounded by the simplex constraint. It is solved with a
// revised phase-1 simplex. Both outcomes come with a certificate that is
// re-checked against the original points: hull weights when the origin is
// enclosed, a separating w (read off the phase-1 duals) otherwise.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "mancap/error.hpp"

namespace mancap {

struct SeparabilityResult {
  bool separable = false;
  Eigen::VectorXd weights;       // separable: sign_i * <weights, z_i> > 0 for all i
  Eigen::VectorXd hull_weights;  // not separable: convex weights with sum_i y_i v_i/|v_i| ~ 0
  int pivots = 0;
};

struct SimplexOptions {
  double pivot_tol = 1e-9;
  double cost_tol = 1e-10;
  double feasibility_tol = 1e-9;    // phase-1 optimum at or below this means origin enclosed
  double certificate_tol = 1e-7;    // residual allowed on hull certificates
  double degenerate_tol = 1e-12;    // step lengths at or below this count as degenerate
  int bland_after_degenerate = 50;  // switch from Dantzig to Bland's rule after this streak
};

namespace detail {

// Phase-1 revised simplex on [A | I] y = b with b = (0, ..., 0, 1), y >= 0 and
// unit cost on the artificials. The basis is refactorized from the original
// columns at every pivot so rounding cannot accumulate on degenerate inputs.
struct PhaseOne {
  Eigen::Index n = 0;  // structural columns
  Eigen::Index m = 0;  // rows
  Eigen::MatrixXd a;
  std::vector<Eigen::Index> basis;
  Eigen::VectorXd x;        // basic values, row i belongs to basis[i]
  Eigen::VectorXd pi;       // simplex multipliers
  Eigen::RowVectorXd reduced;  // n + m reduced costs
  int pivots = 0;

  explicit PhaseOne(const Eigen::MatrixXd& a_in) : n(a_in.cols()), m(a_in.rows()), a(a_in) {
    basis.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;
  }

  double cost(Eigen::Index j) const { return j >= n ? 1.0 : 0.0; }

  Eigen::VectorXd column(Eigen::Index j) const {
    if (j < n) return a.col(j);
    return Eigen::VectorXd::Unit(m, j - n);
  }

  double objective() const {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (basis[static_cast<std::size_t>(i)] >= n) obj += x[i];
    return obj;
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> factorize() {
    Eigen::MatrixXd b(m, m);
    Eigen::VectorXd cb(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = basis[static_cast<std::size_t>(i)];
      b.col(i) = column(j);
      cb[i] = cost(j);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
    x = lu.solve(Eigen::VectorXd::Unit(m, m - 1));
    pi = lu.transpose().solve(cb);
    reduced.resize(n + m);
    reduced.head(n) = -(pi.transpose() * a);
    reduced.tail(m) = Eigen::RowVectorXd::Ones(m) - pi.transpose();
    return lu;
  }

  void solve(const SimplexOptions& opt) {
    const int max_pivots = static_cast<int>(50 * (n + m) + 1000);
    int degenerate_streak = 0;
    bool bland = false;  // once on, Bland's rule stays on so cycling cannot resume
    while (true) {
      const auto lu = factorize();
      bland = bland || degenerate_streak >= opt.bland_after_degenerate;
      Eigen::Index enter = -1;
      double best = -opt.cost_tol;
      for (Eigen::Index j = 0; j < n + m; ++j) {
        if (reduced[j] < best) {
          enter = j;
          if (bland) break;
          best = reduced[j];
        }
      }
      if (enter < 0) return;

      const Eigen::VectorXd u = lu.solve(column(enter));
      // Harris ratio test: bound the step with a small feasibility slack, then
      // take the largest pivot (or the lowest index under Bland) within it.
      double bound = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i)
        if (u[i] > opt.pivot_tol)
          bound = std::min(bound, (std::max(x[i], 0.0) + opt.feasibility_tol) / u[i]);
      if (!std::isfinite(bound))
        throw SolverError("separability LP: phase-1 ray (numerically unbounded)");
      Eigen::Index leave = -1;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (u[i] <= opt.pivot_tol || std::max(x[i], 0.0) / u[i] > bound) continue;
        const bool better =
            leave < 0 || (bland ? basis[static_cast<std::size_t>(i)] <
                                      basis[static_cast<std::size_t>(leave)]
                                : u[i] > u[leave]);
        if (better) leave = i;
      }
      const double step = std::max(x[leave], 0.0) / u[leave];
      degenerate_streak = step <= opt.degenerate_tol ? degenerate_streak + 1 : 0;
      basis[static_cast<std::size_t>(leave)] = enter;
      if (++pivots > max_pivots)
        throw SolverError("separability LP: no convergence after " + std::to_string(pivots) +
                          " pivots (" + std::to_string(m) + " rows, " + std::to_string(n) +
                          " points)");
    }
  }
};

inline void check_preconditions(const Eigen::MatrixXd& points, std::span<const int> signs) {
  if (points.rows() < 2) throw ValidationError("is_separable: at least 2 points required");
  if (points.cols() < 1) throw ValidationError("is_separable: dimension must be >= 1");
  if (static_cast<Eigen::Index>(signs.size()) != points.rows())
    throw ValidationError("is_separable: sign count does not match point count");
  bool pos = false, neg = false;
  for (int s : signs) {
    if (s == 1) {
      pos = true;
    } else if (s == -1) {
      neg = true;
    } else {
      throw ValidationError("is_separable: signs must be +1 or -1");
    }
  }
  if (!pos || !neg) throw ValidationError("is_separable: both signs must be present");
}

}  // namespace detail

/// Decides strict origin-through separability of `points` (N x d, rows are
/// points) under `signs`, returning a verified certificate.
inline SeparabilityResult check_separability(const Eigen::MatrixXd& points,
                                             std::span<const int> signs,
                                             const SimplexOptions& opt = {}) {
  detail::check_preconditions(points, signs);
  const Eigen::Index n = points.rows();
  SeparabilityResult result;

  // Only the span of the points matters; reduce to at most N coordinates.
  Eigen::MatrixXd coords;  // d' x N, columns are points
  Eigen::HouseholderQR<Eigen::MatrixXd> qr;
  const bool projected = points.cols() > n;
  if (projected) {
    qr.compute(points.transpose());
    coords = qr.matrixQR().topRows(n).template triangularView<Eigen::Upper>();
  } else {
    coords = points.transpose();
  }
  const Eigen::Index d = coords.rows();

  Eigen::MatrixXd a(d + 1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = coords.col(j).norm();
    if (norm == 0.0) {
      // A point at the origin can never satisfy a strict margin.
      result.hull_weights = Eigen::VectorXd::Unit(n, j);
      return result;
    }
    a.col(j).head(d) = coords.col(j) * (signs[static_cast<std::size_t>(j)] / norm);
    a(d, j) = 1.0;
  }

  detail::PhaseOne lp(a);
  lp.solve(opt);
  result.pivots = lp.pivots;

  if (lp.objective() <= opt.feasibility_tol) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < lp.m; ++i) {
      const auto b = lp.basis[static_cast<std::size_t>(i)];
      if (b < n) y[b] = std::max(0.0, lp.x[i]);
    }
    const double residual = (a.topRows(d) * y).norm();
    if (std::abs(y.sum() - 1.0) > opt.certificate_tol || residual > opt.certificate_tol)
      throw SolverError("separability LP: hull certificate failed verification (residual " +
                        std::to_string(residual) + ")");
    result.hull_weights = std::move(y);
    return result;
  }

  // At the phase-1 optimum -pi.head(d) scores every signed point at least pi[d] > 0.
  Eigen::VectorXd w = -lp.pi.head(d);
  double min_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j)
    min_margin = std::min(min_margin, signs[static_cast<std::size_t>(j)] * coords.col(j).dot(w));
  if (!(min_margin > 0.0))
    throw SolverError("separability LP: separating certificate failed verification (margin " +
                      std::to_string(min_margin) + ")");
  if (projected) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(points.cols());
    full.head(n) = w;
    w = qr.householderQ() * full;
  }
  result.separable = true;
  result.weights = std::move(w);
  return result;
}

inline bool is_separable(const Eigen::MatrixXd& points, std::span<const int> signs,
                         const SimplexOptions& opt = {}) {
  return check_separability(points, signs, opt).separable;
}

}  // namespace mancap
