#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mancap/embx.hpp"
#include "mancap/error.hpp"
#include "mancap/manifold_set.hpp"
#include "mancap/rng.hpp"

namespace mancap {

struct SynthSpec {
  std::int64_t n_classes = 5;
  std::int64_t points_per_class = 100;
  std::int64_t ambient_dim = 64;
  std::int64_t intrinsic_dim = 3;
  double radius_scale = 1.0;
  double centroid_scale = 1.0;
  double shared_axes_fraction = 0.0;
  std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& s) {
  if (s.n_classes < 2) throw ValidationError("synth: n_classes must be >= 2");
  if (s.points_per_class < 1) throw ValidationError("synth: points_per_class must be >= 1");
  if (s.ambient_dim < 1) throw ValidationError("synth: ambient_dim must be >= 1");
  if (s.intrinsic_dim < 1 || s.intrinsic_dim > s.ambient_dim)
    throw ValidationError("synth: intrinsic_dim must be in [1, ambient_dim]");
  if (!(s.radius_scale >= 0.0) || !std::isfinite(s.radius_scale))
    throw ValidationError("synth: radius_scale must be finite and >= 0");
  if (!(s.centroid_scale >= 0.0) || !std::isfinite(s.centroid_scale))
    throw ValidationError("synth: centroid_scale must be finite and >= 0");
  if (!(s.shared_axes_fraction >= 0.0 && s.shared_axes_fraction <= 1.0))
    throw ValidationError("synth: shared_axes_fraction must be in [0, 1]");
}

namespace detail {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// Gram-Schmidt (two passes) of the columns of `fixed` followed by `extra`;
// the columns of `fixed` are assumed orthonormal already.
inline Eigen::MatrixXd extend_frame(const Eigen::MatrixXd& fixed, Eigen::MatrixXd extra) {
  Eigen::MatrixXd frame(extra.rows(), fixed.cols() + extra.cols());
  frame.leftCols(fixed.cols()) = fixed;
  for (Eigen::Index c = 0; c < extra.cols(); ++c) {
    Eigen::VectorXd v = extra.col(c);
    const Eigen::Index done = fixed.cols() + c;
    for (int pass = 0; pass < 2; ++pass)
      v -= frame.leftCols(done) * (frame.leftCols(done).transpose() * v);
    frame.col(done) = v.normalized();
  }
  return frame;
}

}  // namespace detail

/// Gaussian point clouds with controlled radius, intrinsic dimension and
/// axis sharing. Class mu has centroid c * g_mu and points
/// centroid + (r / sqrt(k)) U_mu xi, where the first round(rho * k) columns
/// of the orthonormal frame U_mu come from one frame shared by all classes.
inline ManifoldSet generate_gaussian_manifolds(const SynthSpec& spec) {
  validate(spec);
  Rng rng(derive_seed({spec.seed, 0x6a055ULL}));
  const Eigen::Index dim = spec.ambient_dim;
  const Eigen::Index k = spec.intrinsic_dim;
  const auto shared = static_cast<Eigen::Index>(std::llround(spec.shared_axes_fraction * static_cast<double>(k)));

  const Eigen::MatrixXd shared_frame =
      detail::extend_frame(Eigen::MatrixXd(dim, 0), detail::gaussian_matrix(dim, shared, rng));

  ManifoldSet set;
  set.ambient_dim = dim;
  const double point_scale = spec.radius_scale / std::sqrt(static_cast<double>(k));
  for (std::int64_t mu = 0; mu < spec.n_classes; ++mu) {
    const Eigen::VectorXd centroid =
        spec.centroid_scale * detail::gaussian_matrix(dim, 1, rng).col(0);
    const Eigen::MatrixXd frame =
        detail::extend_frame(shared_frame, detail::gaussian_matrix(dim, k - shared, rng));
    const Eigen::MatrixXd xi = detail::gaussian_matrix(spec.points_per_class, k, rng);
    Eigen::MatrixXd points = (point_scale * xi) * frame.transpose();
    points.rowwise() += centroid.transpose();
    set.manifolds.push_back(std::move(points));
    set.class_names.push_back("c" + std::to_string(mu));
  }
  return set;
}

/// P classes of exactly one standard-normal point each.
inline ManifoldSet generate_point_classes(std::int64_t n_classes, std::int64_t ambient_dim,
                                          std::uint64_t seed) {
  if (n_classes < 2) throw ValidationError("point classes: P must be >= 2");
  if (ambient_dim < 1) throw ValidationError("point classes: D must be >= 1");
  Rng rng(derive_seed({seed, 0x9017ULL}));
  ManifoldSet set;
  set.ambient_dim = ambient_dim;
  for (std::int64_t mu = 0; mu < n_classes; ++mu) {
    set.manifolds.push_back(detail::gaussian_matrix(1, ambient_dim, rng));
    set.class_names.push_back("c" + std::to_string(mu));
  }
  return set;
}

/// Wraps a manifold set as a one-layer EMBX tensor with label scheme `scheme`.
/// Values are rounded to float32.
inline EmbeddingTensor to_embedding_tensor(const ManifoldSet& set,
                                           const std::string& scheme = "class",
                                           const std::string& model_name = "synthetic") {
  validate(set);
  EmbeddingTensor t;
  auto& h = t.header;
  h.shape = {1, static_cast<std::uint64_t>(set.total_points()),
             static_cast<std::uint64_t>(set.ambient_dim)};
  h.model_name = model_name;
  auto& labels = h.label_schemes[scheme];
  t.data.reserve(h.shape.element_count());
  for (std::size_t mu = 0; mu < set.num_classes(); ++mu) {
    const auto& m = set.manifolds[mu];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      labels.push_back(set.class_names[mu]);
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
    }
  }
  return t;
}

}  // namespace mancap
