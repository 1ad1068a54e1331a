#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mancap/embx.hpp"
#include "mancap/error.hpp"

namespace mancap {

/// P point clouds in R^D, one per class label. Each manifold is an (m x D)
/// matrix whose rows are points.
struct ManifoldSet {
  std::vector<Eigen::MatrixXd> manifolds;
  std::vector<std::string> class_names;
  Eigen::Index ambient_dim = 0;

  std::size_t num_classes() const { return manifolds.size(); }
  Eigen::Index total_points() const {
    Eigen::Index n = 0;
    for (const auto& m : manifolds) n += m.rows();
    return n;
  }
};

inline void validate(const ManifoldSet& s) {
  if (s.manifolds.size() < 2) throw ValidationError("manifold set: P >= 2 required");
  if (s.class_names.size() != s.manifolds.size())
    throw ValidationError("manifold set: class_names size does not match manifold count");
  if (s.ambient_dim < 1) throw ValidationError("manifold set: ambient_dim must be >= 1");
  for (std::size_t mu = 0; mu < s.manifolds.size(); ++mu) {
    const auto& m = s.manifolds[mu];
    if (m.rows() < 1)
      throw ValidationError("manifold '" + s.class_names[mu] + "' has no points");
    if (m.cols() != s.ambient_dim)
      throw ValidationError("manifold '" + s.class_names[mu] + "' has wrong ambient dimension");
    if (!m.allFinite())
      throw ValidationError("manifold '" + s.class_names[mu] + "' contains non-finite values");
  }
}

/// One manifold per distinct label of `scheme` at `layer`, ordered by first
/// occurrence; rows keep dataset order.
inline ManifoldSet group_manifolds(const EmbeddingTensor& t, std::uint64_t layer,
                                   const std::string& scheme) {
  const auto& shape = t.header.shape;
  if (layer >= shape.num_layers)
    throw IndexError("layer " + std::to_string(layer) + " out of range (num_layers = " +
                     std::to_string(shape.num_layers) + ")");
  const auto it = t.header.label_schemes.find(scheme);
  if (it == t.header.label_schemes.end())
    throw KeyError("label scheme '" + scheme + "' not present in header");
  const auto& labels = it->second;

  std::unordered_map<std::string, std::size_t> index_of;
  std::vector<std::vector<std::uint64_t>> members;
  ManifoldSet set;
  for (std::uint64_t i = 0; i < labels.size(); ++i) {
    auto [pos, inserted] = index_of.try_emplace(labels[i], members.size());
    if (inserted) {
      members.emplace_back();
      set.class_names.push_back(labels[i]);
    }
    members[pos->second].push_back(i);
  }
  if (members.size() < 2)
    throw ValidationError("scheme '" + scheme + "' has a single distinct label: P >= 2 required");

  const auto dim = static_cast<Eigen::Index>(shape.embed_dim);
  const auto data = t.layer(layer);
  set.ambient_dim = dim;
  for (const auto& rows : members) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const float* src = data.data() + rows[r] * shape.embed_dim;
      for (Eigen::Index j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(r), j) = src[j];
    }
    set.manifolds.push_back(std::move(m));
  }
  return set;
}

}  // namespace mancap
