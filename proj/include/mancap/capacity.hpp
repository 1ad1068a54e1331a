#pragma once

// Manifold capacity by random projection.
//
// F(d) is the probability that a random one-vs-rest dichotomy of the P
// classes is linearly separable (through the origin) after projecting the
// points with a d x D standard-normal matrix. The critical dimension D* is the
// midpoint of a logistic fitted to F around its 0.5 crossing, and the
// capacity is alpha = P / D*.
//
// Projection is done in an orthonormal basis of the data span: with
// X^T = Q R (thin QR, k = min(N, D) columns), S x_i = (S Q) r_i and S Q is
// again a d x k standard-normal matrix, so each trial draws a d x k matrix
// instead of d x D. For d >= k that matrix is injective almost surely and the
// outcome equals separability in the data span itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>
#include <boost/multiprecision/cpp_int.hpp>

#include "mancap/error.hpp"
#include "mancap/manifold_set.hpp"
#include "mancap/rng.hpp"
#include "mancap/separability.hpp"

namespace mancap {

/// Probability that a fixed dichotomy of n points in general position in R^d
/// is separable through the origin: C(n, d) / 2^n with
/// C(n, d) = 2 * sum_{k < d} binom(n - 1, k).
inline double cover_probability(std::uint64_t n, std::uint64_t d) {
  if (n < 1 || d < 1) throw ValidationError("cover_probability: n and d must be >= 1");
  if (d >= n) return 1.0;
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  cpp_int binom = 1;  // binom(n - 1, k)
  cpp_int count = 0;
  for (std::uint64_t k = 0; k < d; ++k) {
    count += binom;
    binom = binom * (n - 1 - k) / (k + 1);
  }
  count *= 2;
  const cpp_int total = cpp_int(1) << static_cast<unsigned>(n);
  return cpp_rational(count, total).convert_to<double>();
}

/// One-vs-rest labelling: +1 for points of `class_index`, -1 elsewhere.
struct DichotomySpec {
  std::size_t class_index = 0;
  std::vector<int> signs;
};

inline DichotomySpec make_dichotomy(std::span<const std::size_t> labels, std::size_t class_index) {
  DichotomySpec spec{class_index, {}};
  spec.signs.reserve(labels.size());
  bool pos = false, neg = false;
  for (auto l : labels) {
    const bool in = l == class_index;
    spec.signs.push_back(in ? 1 : -1);
    (in ? pos : neg) = true;
  }
  if (!pos || !neg)
    throw ValidationError("dichotomy for class " + std::to_string(class_index) +
                          " has an empty side");
  return spec;
}

struct FCurveEntry {
  std::int64_t d_proj = 0;
  std::int64_t trials = 0;
  std::int64_t successes = 0;
  double f_hat = 0.0;
};

struct FCurve {
  std::vector<FCurveEntry> entries;  // strictly increasing d_proj
  std::uint64_t seed = 0;
  std::int64_t n_points = 0;
  std::int64_t n_classes = 0;
};

struct LogisticFit {
  double midpoint = 0.0;
  double slope = 1.0;     // scale s in 1 / (1 + exp(-(d - midpoint) / s))
  double residual = 0.0;  // root-mean-square residual over the fine grid
};

enum class CapacityStatus { ok, saturated_low, not_separable_at_full_dim };

inline std::string_view to_string(CapacityStatus s) {
  switch (s) {
    case CapacityStatus::ok: return "ok";
    case CapacityStatus::saturated_low: return "saturated_low";
    case CapacityStatus::not_separable_at_full_dim: return "not_separable_at_full_dim";
  }
  return "ok";
}

struct CapacityConfig {
  int n_coarse = 50;
  int n_fine = 200;
  int grid_size = 9;
  std::uint64_t seed = 0;
  int points_per_class = 50;  // 0 disables subsampling
  bool center_global_mean = false;
  unsigned workers = 1;  // 0 = hardware concurrency
  double max_fit_residual = 0.1;
};

struct CapacityEstimate {
  double alpha = 0.0;
  double d_star = 0.0;
  FCurve curve;
  LogisticFit fit;
  CapacityStatus status = CapacityStatus::ok;
  std::optional<std::string> quality_warning;
  int points_per_class = 0;  // cap applied, 0 if none
};

/// Flattened, basis-reduced form of a manifold set, shared by all trials.
class CapacityProblem {
 public:
  CapacityProblem(const ManifoldSet& set, int points_per_class = 0, std::uint64_t seed = 0,
                  bool center_global_mean = false)
      : num_classes_(set.num_classes()), ambient_dim_(set.ambient_dim) {
    validate(set);
    std::vector<std::vector<Eigen::Index>> rows(set.num_classes());
    Eigen::Index n = 0;
    for (std::size_t mu = 0; mu < set.num_classes(); ++mu) {
      const auto m = set.manifolds[mu].rows();
      auto& idx = rows[mu];
      idx.resize(static_cast<std::size_t>(m));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      if (points_per_class > 0 && m > points_per_class) {
        Rng rng(derive_seed({seed, 0x5ab5a3e1ULL, mu}));
        for (int i = 0; i < points_per_class; ++i) {
          const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m - i)));
          std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        idx.resize(static_cast<std::size_t>(points_per_class));
        std::sort(idx.begin(), idx.end());
      }
      n += static_cast<Eigen::Index>(idx.size());
    }

    Eigen::MatrixXd points(ambient_dim_, n);  // columns are points
    labels_.reserve(static_cast<std::size_t>(n));
    Eigen::Index c = 0;
    for (std::size_t mu = 0; mu < set.num_classes(); ++mu) {
      for (auto r : rows[mu]) {
        points.col(c++) = set.manifolds[mu].row(r).transpose();
        labels_.push_back(mu);
      }
    }
    if (center_global_mean) points.colwise() -= points.rowwise().mean();

    // Rank-revealing QR: rows of R past the numerical rank are rounding noise
    // whose reflectors would make the basis depend on the overall scale.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(points.rows(), points.cols());
    qr.setThreshold(kSpanRankTolerance);
    qr.compute(points);
    const Eigen::Index k = std::max<Eigen::Index>(qr.rank(), 1);
    const Eigen::MatrixXd r =
        qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>().toDenseMatrix();
    coords_ = (r * qr.colsPermutation().transpose()).transpose();
    if (qr.rank() == 0) coords_.setZero();
  }

  static constexpr double kSpanRankTolerance = 1e-10;

  std::size_t num_classes() const { return num_classes_; }
  Eigen::Index num_points() const { return coords_.rows(); }
  Eigen::Index ambient_dim() const { return ambient_dim_; }
  Eigen::Index span_dim() const { return coords_.cols(); }
  const std::vector<std::size_t>& labels() const { return labels_; }
  /// N x k coordinates of the points in an orthonormal basis of their span.
  const Eigen::MatrixXd& coords() const { return coords_; }

  /// One Monte-Carlo trial: draw the class, draw the projection, test.
  bool trial(Eigen::Index d_proj, Rng& rng) const {
    if (d_proj < 1 || d_proj > ambient_dim_)
      throw ValidationError("d_proj " + std::to_string(d_proj) + " outside [1, " +
                            std::to_string(ambient_dim_) + "]");
    const auto mu = static_cast<std::size_t>(rng.below(num_classes_));
    const DichotomySpec dichotomy = make_dichotomy(labels_, mu);
    const Eigen::Index k = span_dim();
    if (d_proj >= k) return is_separable(coords_, dichotomy.signs);

    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g(d_proj, k);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd projected = coords_ * g.transpose();
    return is_separable(projected, dichotomy.signs);
  }

 private:
  std::size_t num_classes_;
  Eigen::Index ambient_dim_;
  std::vector<std::size_t> labels_;
  Eigen::MatrixXd coords_;
};

/// Random stream of trial `trial_index` at projection dimension `d_proj`.
inline Rng trial_rng(std::uint64_t seed, std::int64_t d_proj, std::int64_t trial_index) {
  return Rng(derive_seed({seed, static_cast<std::uint64_t>(d_proj),
                          static_cast<std::uint64_t>(trial_index)}));
}

inline bool sample_trial(const CapacityProblem& problem, Eigen::Index d_proj, Rng& rng) {
  return problem.trial(d_proj, rng);
}

inline bool sample_trial(const ManifoldSet& set, Eigen::Index d_proj, Rng& rng) {
  return CapacityProblem(set).trial(d_proj, rng);
}

/// Fraction of separable trials at `d_proj`. Trial t uses
/// trial_rng(seed, d_proj, t), so the result does not depend on `workers`.
inline FCurveEntry estimate_f(const CapacityProblem& problem, std::int64_t d_proj,
                              std::int64_t n_trials, std::uint64_t seed, unsigned workers = 1) {
  if (n_trials < 1) throw ValidationError("estimate_f: n_trials must be >= 1");
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::int64_t>(workers, n_trials));

  std::vector<std::uint8_t> outcome(static_cast<std::size_t>(n_trials), 0);
  std::vector<std::exception_ptr> failure(workers);
  auto run = [&](unsigned w) {
    for (std::int64_t t = w; t < n_trials; t += workers) {
      try {
        Rng rng = trial_rng(seed, d_proj, t);
        outcome[static_cast<std::size_t>(t)] = problem.trial(d_proj, rng) ? 1 : 0;
      } catch (const SolverError& e) {
        failure[w] = std::make_exception_ptr(SolverError(
            std::string(e.what()) + " [seed " + std::to_string(seed) + ", d_proj " +
            std::to_string(d_proj) + ", trial " + std::to_string(t) + "]"));
        return;
      } catch (...) {
        failure[w] = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failure)
    if (f) std::rethrow_exception(f);

  FCurveEntry e;
  e.d_proj = d_proj;
  e.trials = n_trials;
  e.successes = std::accumulate(outcome.begin(), outcome.end(), std::int64_t{0});
  e.f_hat = static_cast<double>(e.successes) / static_cast<double>(n_trials);
  return e;
}

inline FCurveEntry estimate_f(const ManifoldSet& set, std::int64_t d_proj, std::int64_t n_trials,
                              std::uint64_t seed, unsigned workers = 1) {
  return estimate_f(CapacityProblem(set), d_proj, n_trials, seed, workers);
}

/// Least-squares fit of 1 / (1 + exp(-(d - midpoint) / slope)) by
/// Levenberg-Marquardt over (midpoint, log slope).
inline LogisticFit fit_logistic(std::span<const FCurveEntry> grid, double midpoint0,
                                double slope0) {
  auto residuals = [&](double m, double log_s, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const double s = std::exp(log_s);
    r.resize(static_cast<Eigen::Index>(grid.size()));
    if (jac) jac->resize(r.size(), 2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double u = (static_cast<double>(grid[i].d_proj) - m) / s;
      const double f = 1.0 / (1.0 + std::exp(-u));
      const auto row = static_cast<Eigen::Index>(i);
      r[row] = f - grid[i].f_hat;
      if (jac) {
        const double df = f * (1.0 - f);
        (*jac)(row, 0) = -df / s;
        (*jac)(row, 1) = -df * u;
      }
    }
  };

  constexpr double kMinLogSlope = -6.907755278982137;  // log(1e-3)
  double m = midpoint0;
  double log_s = std::log(std::max(slope0, 1e-3));
  double lambda = 1e-3;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(m, log_s, r, &jac);
  double cost = r.squaredNorm();
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    const Eigen::Vector2d g = jac.transpose() * r;
    if (g.norm() < 1e-14) break;
    Eigen::Matrix2d a = jtj;
    a.diagonal().array() += lambda * (1.0 + jtj.diagonal().array());
    const Eigen::Vector2d step = a.ldlt().solve(-g);
    const double m_new = m + step[0];
    const double ls_new = std::max(kMinLogSlope, log_s + step[1]);
    Eigen::VectorXd r_new;
    residuals(m_new, ls_new, r_new, nullptr);
    const double cost_new = r_new.squaredNorm();
    if (cost_new < cost) {
      const bool converged = cost - cost_new < 1e-15 * (1.0 + cost);
      m = m_new;
      log_s = ls_new;
      cost = cost_new;
      lambda = std::max(lambda * 0.3, 1e-12);
      residuals(m, log_s, r, &jac);
      if (converged) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  LogisticFit fit;
  fit.midpoint = m;
  fit.slope = std::exp(log_s);
  fit.residual = grid.empty() ? 0.0 : std::sqrt(cost / static_cast<double>(grid.size()));
  return fit;
}

/// Callable giving an F estimate at (d_proj, trials).
using FEstimator = std::function<FCurveEntry(std::int64_t d_proj, std::int64_t trials)>;

/// Two-phase search for the critical dimension.
///
/// Phase 1 probes d = 1, 2, 4, ... with n_coarse trials until F >= 0.5, then
/// bisects until the bracket spans at most grid_size - 1 dimensions.
/// Phase 2 evaluates grid_size equispaced dimensions across the bracket with
/// n_fine trials and fits a logistic; D* is its midpoint.
inline CapacityEstimate find_critical_dimension(const FEstimator& estimate,
                                                std::int64_t n_classes,
                                                std::int64_t ambient_dim,
                                                const CapacityConfig& config) {
  if (config.n_coarse < 1 || config.n_fine < 1 || config.grid_size < 2)
    throw ValidationError("capacity config: n_coarse, n_fine >= 1 and grid_size >= 2 required");
  if (ambient_dim < 1) throw ValidationError("capacity: ambient dimension must be >= 1");

  CapacityEstimate out;
  std::vector<FCurveEntry> probes;
  auto probe = [&](std::int64_t d, std::int64_t trials) {
    probes.push_back(estimate(d, trials));
    return probes.back().f_hat;
  };
  auto finish = [&](double d_star, CapacityStatus status) {
    // Same seed stream per (d, trial index): a longer run at d supersedes a shorter one.
    std::stable_sort(probes.begin(), probes.end(), [](const auto& a, const auto& b) {
      return a.d_proj < b.d_proj || (a.d_proj == b.d_proj && a.trials > b.trials);
    });
    for (const auto& p : probes)
      if (out.curve.entries.empty() || out.curve.entries.back().d_proj != p.d_proj)
        out.curve.entries.push_back(p);
    out.curve.n_classes = n_classes;
    out.status = status;
    out.d_star = d_star;
    out.alpha = static_cast<double>(n_classes) / d_star;
    return out;
  };

  if (probe(1, config.n_coarse) >= 0.5) {
    out.fit = {1.0, 1.0, 0.0};
    return finish(1.0, CapacityStatus::saturated_low);
  }
  std::int64_t lo = 1, hi = -1;
  for (std::int64_t d = 2; hi < 0; d *= 2) {
    d = std::min(d, ambient_dim);
    if (d == ambient_dim) {
      if (probe(d, config.n_fine) >= 0.5) {
        hi = d;
      } else {
        out.fit = {static_cast<double>(ambient_dim), 1.0, 0.0};
        return finish(static_cast<double>(ambient_dim), CapacityStatus::not_separable_at_full_dim);
      }
    } else if (probe(d, config.n_coarse) >= 0.5) {
      hi = d;
    } else {
      lo = d;
    }
  }
  const std::int64_t width = config.grid_size - 1;
  while (hi - lo > width) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (probe(mid, config.n_coarse) >= 0.5 ? hi : lo) = mid;
  }

  std::vector<std::int64_t> grid_dims;
  for (int g = 0; g < config.grid_size; ++g) {
    const double t = static_cast<double>(g) / static_cast<double>(config.grid_size - 1);
    const auto d = static_cast<std::int64_t>(
        std::llround(static_cast<double>(lo) + t * static_cast<double>(hi - lo)));
    if (grid_dims.empty() || grid_dims.back() != d) grid_dims.push_back(d);
  }
  std::vector<FCurveEntry> grid;
  for (auto d : grid_dims) {
    probe(d, config.n_fine);
    grid.push_back(probes.back());
  }

  // Start the fit at the interpolated 0.5 crossing of the grid.
  double m0 = 0.5 * static_cast<double>(lo + hi);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i - 1].f_hat < 0.5 && grid[i].f_hat >= 0.5) {
      const double f0 = grid[i - 1].f_hat, f1 = grid[i].f_hat;
      const double x0 = static_cast<double>(grid[i - 1].d_proj);
      const double x1 = static_cast<double>(grid[i].d_proj);
      m0 = x0 + (0.5 - f0) / (f1 - f0) * (x1 - x0);
      break;
    }
  }
  out.fit = fit_logistic(grid, m0, std::max(1.0, static_cast<double>(hi - lo) / 8.0));
  // A jump between adjacent grid points leaves the midpoint unidentified
  // anywhere inside that gap; take the interpolated crossing.
  std::int64_t spacing = hi - lo;
  for (std::size_t i = 1; i < grid.size(); ++i)
    spacing = std::min(spacing, grid[i].d_proj - grid[i - 1].d_proj);
  if (out.fit.slope * 20.0 < static_cast<double>(spacing)) out.fit.midpoint = m0;

  double d_star = out.fit.midpoint;
  if (out.fit.residual > config.max_fit_residual)
    out.quality_warning = "logistic fit residual " + std::to_string(out.fit.residual) +
                          " exceeds " + std::to_string(config.max_fit_residual);
  if (!(d_star >= static_cast<double>(lo) && d_star <= static_cast<double>(hi))) {
    const double clamped =
        std::clamp(d_star, static_cast<double>(lo), static_cast<double>(hi));
    out.quality_warning = "fitted midpoint " + std::to_string(d_star) +
                          " outside bracket; clamped to " + std::to_string(clamped);
    d_star = clamped;
  }
  if (d_star <= 1.0) return finish(1.0, CapacityStatus::saturated_low);
  return finish(d_star, CapacityStatus::ok);
}

inline CapacityEstimate find_critical_dimension(const CapacityProblem& problem,
                                                const CapacityConfig& config) {
  if (problem.ambient_dim() < 2)
    throw ValidationError("capacity: ambient dimension must be >= 2");
  const FEstimator est = [&](std::int64_t d, std::int64_t trials) {
    return estimate_f(problem, d, trials, config.seed, config.workers);
  };
  auto out = find_critical_dimension(est, static_cast<std::int64_t>(problem.num_classes()),
                                     problem.ambient_dim(), config);
  out.curve.seed = config.seed;
  out.curve.n_points = problem.num_points();
  return out;
}

/// Capacity alpha = P / D* of a manifold set, subsampling each class to at
/// most config.points_per_class points first.
inline CapacityEstimate manifold_capacity(const ManifoldSet& set,
                                          const CapacityConfig& config = {}) {
  const CapacityProblem problem(set, config.points_per_class, config.seed,
                                config.center_global_mean);
  auto out = find_critical_dimension(problem, config);
  out.points_per_class = config.points_per_class;
  return out;
}

}  // namespace mancap
