#pragma once

// Geometry of individual manifolds (dimension, radius) and the correlation
// structure between them (axes-alignment, center-axes alignment).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "mancap/error.hpp"
#include "mancap/manifold_set.hpp"

namespace mancap {

enum class Centering { origin, global_mean };

inline std::string_view to_string(Centering c) {
  return c == Centering::origin ? "origin" : "global-mean";
}

struct ManifoldSpectrum {
  Eigen::VectorXd centroid;
  Eigen::VectorXd eigenvalues;     // nonincreasing, length min(m-1, D)
  Eigen::MatrixXd principal_axes;  // D x eigenvalues.size(), orthonormal columns

  /// Number of eigenvalues above `rel_tol` times the largest one.
  Eigen::Index rank(double rel_tol = 1e-10) const {
    if (eigenvalues.size() == 0 || eigenvalues[0] <= 0.0) return 0;
    Eigen::Index r = 0;
    while (r < eigenvalues.size() && eigenvalues[r] > rel_tol * eigenvalues[0]) ++r;
    return r;
  }
};

struct GeometrySummary {
  double mean_dimension = 1.0;
  double mean_radius = 0.0;
  double axes_alignment = 0.0;
  double center_axes_alignment = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline Eigen::MatrixXd centered(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

// Flip each column so its first nonzero coordinate is positive.
inline void canonicalize_signs(Eigen::MatrixXd& axes) {
  for (Eigen::Index c = 0; c < axes.cols(); ++c) {
    for (Eigen::Index r = 0; r < axes.rows(); ++r) {
      if (std::abs(axes(r, c)) > 1e-12) {
        if (axes(r, c) < 0.0) axes.col(c) *= -1.0;
        break;
      }
    }
  }
}

}  // namespace detail

/// Participation ratio of a covariance spectrum: (sum l)^2 / sum l^2.
inline double participation_ratio_from_eigenvalues(std::span<const double> eigenvalues) {
  double sum = 0.0, sum_sq = 0.0;
  for (double l : eigenvalues) {
    sum += l;
    sum_sq += l * l;
  }
  if (sum_sq <= 0.0) return 1.0;
  return sum * sum / sum_sq;
}

/// Participation ratio of a point cloud (rows are points), about its centroid.
///
/// Uses tr(C)^2 / ||C||_F^2, which equals the eigenvalue form without an
/// eigendecomposition; C is formed on the smaller side (m x m or D x D).
/// Clouds whose points coincide (relative spread below 1e-12) return 1.
inline double participation_ratio(const Eigen::MatrixXd& points) {
  if (points.rows() < 2)
    throw DegenerateInputError("participation_ratio: at least 2 points required");
  const Eigen::MatrixXd xc = detail::centered(points);
  const double scale = points.squaredNorm() / static_cast<double>(points.rows());
  const double trace = xc.squaredNorm();
  if (trace <= 1e-24 * scale || trace == 0.0) return 1.0;
  const Eigen::MatrixXd c = xc.rows() <= xc.cols() ? Eigen::MatrixXd(xc * xc.transpose())
                                                   : Eigen::MatrixXd(xc.transpose() * xc);
  return std::max(1.0, trace * trace / c.squaredNorm());
}

/// Largest Euclidean distance between any two points; 0 for a single point.
inline double manifold_radius(const Eigen::MatrixXd& points) {
  if (points.rows() < 1) throw DegenerateInputError("manifold_radius: empty manifold");
  double best = 0.0;
  for (Eigen::Index a = 0; a < points.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < points.rows(); ++b) {
      best = std::max(best, (points.row(a) - points.row(b)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

/// Centroid, covariance eigenvalues and principal axes, with axis signs fixed
/// so the first nonzero coordinate of each axis is positive.
inline ManifoldSpectrum spectrum(const Eigen::MatrixXd& points) {
  const Eigen::Index m = points.rows();
  if (m < 2) throw DegenerateInputError("spectrum: at least 2 points required");
  ManifoldSpectrum s;
  s.centroid = points.colwise().mean().transpose();
  const Eigen::MatrixXd xc = points.rowwise() - s.centroid.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinV);
  const Eigen::Index r = std::min<Eigen::Index>(m - 1, points.cols());
  s.eigenvalues = svd.singularValues().head(r).array().square() / static_cast<double>(m - 1);
  s.principal_axes = svd.matrixV().leftCols(r);
  detail::canonicalize_signs(s.principal_axes);
  return s;
}

namespace detail {

inline Eigen::MatrixXd top_axes(const ManifoldSpectrum& s, Eigen::Index k,
                                      const std::string& name) {
  if (k < 1) throw ValidationError("k_axes must be >= 1");
  if (s.rank() < k)
    throw RankError("manifold '" + name + "': " + std::to_string(k) +
                    " axes requested but rank is " + std::to_string(s.rank()));
  return s.principal_axes.leftCols(k);
}

inline double mean_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().mean(); }

inline Eigen::VectorXd global_mean(const ManifoldSet& set) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(set.ambient_dim);
  for (const auto& m : set.manifolds) sum += m.colwise().sum().transpose();
  return sum / static_cast<double>(set.total_points());
}

}  // namespace detail

/// Mean over manifold pairs of the mean |cos| between their top-k axes.
/// Manifolds whose spectrum is absent (single-point) are skipped.
inline double axes_alignment(const std::vector<std::optional<ManifoldSpectrum>>& spectra,
                             const std::vector<std::string>& names, Eigen::Index k) {
  std::vector<Eigen::MatrixXd> axes;
  for (std::size_t mu = 0; mu < spectra.size(); ++mu) {
    if (spectra[mu]) axes.push_back(detail::top_axes(*spectra[mu], k, names[mu]));
  }
  if (axes.size() < 2)
    throw DegenerateInputError("axes_alignment: fewer than 2 manifolds with >= 2 points");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    for (std::size_t b = a + 1; b < axes.size(); ++b) {
      total += detail::mean_abs(axes[a].transpose() * axes[b]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

/// Mean over manifolds of the mean |cos| between the centroid direction and
/// the top-k axes. With Centering::global_mean, centroids are taken relative
/// to the mean of all points.
inline double center_axes_alignment(const std::vector<std::optional<ManifoldSpectrum>>& spectra,
                                    const std::vector<std::string>& names, Eigen::Index k,
                                    const Eigen::VectorXd& origin) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t mu = 0; mu < spectra.size(); ++mu) {
    if (!spectra[mu]) continue;
    const Eigen::MatrixXd axes = detail::top_axes(*spectra[mu], k, names[mu]);
    const Eigen::VectorXd c = spectra[mu]->centroid - origin;
    const double norm = c.norm();
    const double scale = std::max(spectra[mu]->centroid.norm(), origin.norm());
    if (norm == 0.0 || norm <= 1e-12 * scale)
      throw DegenerateInputError("center_axes_alignment: manifold '" + names[mu] +
                                 "' has a zero centroid after centering");
    total += detail::mean_abs(axes.transpose() * (c / norm));
    ++count;
  }
  if (count == 0)
    throw DegenerateInputError("center_axes_alignment: no manifold with >= 2 points");
  return total / static_cast<double>(count);
}

namespace detail {

inline std::vector<std::optional<ManifoldSpectrum>> spectra_of(const ManifoldSet& set) {
  std::vector<std::optional<ManifoldSpectrum>> out;
  out.reserve(set.num_classes());
  for (const auto& m : set.manifolds) {
    if (m.rows() >= 2) {
      out.emplace_back(spectrum(m));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

inline Eigen::VectorXd centering_origin(const ManifoldSet& set, Centering centering) {
  return centering == Centering::origin ? Eigen::VectorXd::Zero(set.ambient_dim)
                                        : global_mean(set);
}

}  // namespace detail

inline double axes_alignment(const ManifoldSet& set, Eigen::Index k) {
  validate(set);
  return axes_alignment(detail::spectra_of(set), set.class_names, k);
}

inline double center_axes_alignment(const ManifoldSet& set, Eigen::Index k,
                                    Centering centering = Centering::origin) {
  validate(set);
  return center_axes_alignment(detail::spectra_of(set), set.class_names, k,
                               detail::centering_origin(set, centering));
}

/// Averages dimension and radius across manifolds and attaches both alignment
/// scalars. Single-point manifolds contribute radius 0 and are left out of
/// the dimension and alignment averages, with a warning.
inline GeometrySummary summarize_geometry(const ManifoldSet& set, Eigen::Index k,
                                          Centering centering = Centering::origin) {
  validate(set);
  GeometrySummary out;
  const auto spectra = detail::spectra_of(set);

  double radius_sum = 0.0, pr_sum = 0.0;
  std::size_t pr_count = 0;
  for (std::size_t mu = 0; mu < set.num_classes(); ++mu) {
    const auto& m = set.manifolds[mu];
    radius_sum += manifold_radius(m);
    if (m.rows() < 2) {
      out.warnings.push_back("manifold '" + set.class_names[mu] +
                             "' has a single point; excluded from dimension and alignment");
      continue;
    }
    pr_sum += participation_ratio(m);
    ++pr_count;
  }
  if (pr_count == 0)
    throw DegenerateInputError("summarize_geometry: no manifold with >= 2 points");
  out.mean_radius = radius_sum / static_cast<double>(set.num_classes());
  out.mean_dimension = pr_sum / static_cast<double>(pr_count);
  out.axes_alignment = axes_alignment(spectra, set.class_names, k);
  out.center_axes_alignment = center_axes_alignment(spectra, set.class_names, k,
                                                    detail::centering_origin(set, centering));
  return out;
}

}  // namespace mancap
