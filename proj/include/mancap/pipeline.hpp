#pragma once

// Layerwise analysis of EMBX tensors, coherence tagging, and normalization of
// prompting conditions against a baseline condition.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mancap/capacity.hpp"
#include "mancap/digest.hpp"
#include "mancap/embx.hpp"
#include "mancap/error.hpp"
#include "mancap/manifold_set.hpp"
#include "mancap/report.hpp"
#include "mancap/stats.hpp"

namespace mancap {

enum class Metric { capacity, dimension, radius, axes_alignment, center_axes_alignment };

inline constexpr std::array<Metric, 5> kAllMetrics = {
    Metric::capacity, Metric::dimension, Metric::radius, Metric::axes_alignment,
    Metric::center_axes_alignment};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::capacity: return "capacity";
    case Metric::dimension: return "dimension";
    case Metric::radius: return "radius";
    case Metric::axes_alignment: return "axes_alignment";
    case Metric::center_axes_alignment: return "center_axes_alignment";
  }
  return "capacity";
}

inline Metric metric_from_string(std::string_view s) {
  for (auto m : kAllMetrics)
    if (to_string(m) == s) return m;
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

struct AnalysisConfig {
  std::string scheme;
  std::optional<std::vector<std::uint64_t>> layers;  // nullopt = all layers
  std::vector<Metric> metrics{kAllMetrics.begin(), kAllMetrics.end()};
  CapacityConfig capacity;  // carries seed, points_per_class and workers
  int k_axes = 5;
  Centering centering = Centering::origin;
};

inline void validate(const AnalysisConfig& c, const EmbxHeader& h) {
  if (c.metrics.empty()) throw ValidationError("config: metrics must be nonempty");
  if (c.k_axes < 1) throw ValidationError("config: k_axes must be >= 1");
  if (!h.label_schemes.contains(c.scheme))
    throw KeyError("label scheme '" + c.scheme + "' not present in header");
  if (c.layers) {
    for (auto l : *c.layers)
      if (l >= h.shape.num_layers)
        throw IndexError("layer " + std::to_string(l) + " out of range (num_layers = " +
                         std::to_string(h.shape.num_layers) + ")");
  }
}

/// Canonical JSON of every field that can change results (worker count excluded).
inline nlohmann::json config_to_json(const AnalysisConfig& c) {
  nlohmann::json j;
  j["scheme"] = c.scheme;
  j["layers"] = c.layers ? nlohmann::json(*c.layers) : nlohmann::json("all");
  auto& metrics = j["metrics"] = nlohmann::json::array();
  for (auto m : c.metrics) metrics.push_back(std::string(to_string(m)));
  j["k_axes"] = c.k_axes;
  j["centering"] = std::string(to_string(c.centering));
  j["seed"] = c.capacity.seed;
  j["points_per_class"] = c.capacity.points_per_class;
  j["trials_coarse"] = c.capacity.n_coarse;
  j["trials_fine"] = c.capacity.n_fine;
  j["grid"] = c.capacity.grid_size;
  j["capacity_center_global_mean"] = c.capacity.center_global_mean;
  j["max_fit_residual"] = c.capacity.max_fit_residual;
  return j;
}

inline std::string config_digest(const AnalysisConfig& c) {
  return sha256_hex(config_to_json(c).dump());
}

inline std::string tensor_digest(const EmbeddingTensor& t) {
  std::ostringstream out(std::ios::binary);
  write_embx(t, out);
  return sha256_hex(out.str());
}

struct MetricResult {
  std::optional<double> value;
  std::string status = "ok";
};

struct LayerReport {
  std::uint64_t layer = 0;
  std::map<Metric, MetricResult> metrics;
  std::vector<std::string> warnings;
  Provenance provenance;
};

namespace detail {

inline std::string capacity_status(const CapacityEstimate& e) {
  std::string s(to_string(e.status));
  if (e.quality_warning) s = e.status == CapacityStatus::ok ? "quality_warning" : s + ";quality_warning";
  return s;
}

template <class F>
MetricResult guarded(F&& compute) {
  MetricResult r;
  try {
    r.value = compute(r);
    if (r.value && !std::isfinite(*r.value)) {
      r.value.reset();
      r.status = "error: non-finite result";
    }
  } catch (const Error& e) {
    r.value.reset();
    r.status = std::string("error: ") + e.what();
  }
  return r;
}

}  // namespace detail

/// Geometry and capacity of one manifold set, per requested metric. A failing
/// metric yields an error status instead of aborting the others.
inline LayerReport analyze_set(const ManifoldSet& set, const AnalysisConfig& config) {
  LayerReport report;
  std::optional<std::vector<std::optional<ManifoldSpectrum>>> spectra;
  auto get_spectra = [&]() -> const auto& {
    if (!spectra) spectra = detail::spectra_of(set);
    return *spectra;
  };
  for (auto metric : config.metrics) {
    if (report.metrics.contains(metric)) continue;
    MetricResult result;
    switch (metric) {
      case Metric::capacity:
        result = detail::guarded([&](MetricResult& r) -> std::optional<double> {
          const auto est = manifold_capacity(set, config.capacity);
          r.status = detail::capacity_status(est);
          return est.alpha;
        });
        break;
      case Metric::dimension:
        result = detail::guarded([&](MetricResult&) -> std::optional<double> {
          double sum = 0.0;
          std::size_t n = 0;
          for (std::size_t mu = 0; mu < set.num_classes(); ++mu) {
            if (set.manifolds[mu].rows() < 2) {
              report.warnings.push_back("manifold '" + set.class_names[mu] +
                                        "' has a single point; excluded from dimension");
              continue;
            }
            sum += participation_ratio(set.manifolds[mu]);
            ++n;
          }
          if (n == 0) throw DegenerateInputError("no manifold with >= 2 points");
          return sum / static_cast<double>(n);
        });
        break;
      case Metric::radius:
        result = detail::guarded([&](MetricResult&) -> std::optional<double> {
          double sum = 0.0;
          for (const auto& m : set.manifolds) sum += manifold_radius(m);
          return sum / static_cast<double>(set.num_classes());
        });
        break;
      case Metric::axes_alignment:
        result = detail::guarded([&](MetricResult&) -> std::optional<double> {
          return axes_alignment(get_spectra(), set.class_names, config.k_axes);
        });
        break;
      case Metric::center_axes_alignment:
        result = detail::guarded([&](MetricResult&) -> std::optional<double> {
          return center_axes_alignment(get_spectra(), set.class_names, config.k_axes,
                                       detail::centering_origin(set, config.centering));
        });
        break;
    }
    report.metrics[metric] = std::move(result);
  }
  return report;
}

/// Runs the configured metrics on every requested layer, ascending.
inline std::vector<LayerReport> analyze(const EmbeddingTensor& tensor,
                                        const AnalysisConfig& config,
                                        std::string input_digest = {}) {
  validate(config, tensor.header);
  if (input_digest.empty()) input_digest = tensor_digest(tensor);
  std::vector<std::uint64_t> layers;
  if (config.layers) {
    layers = *config.layers;
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  } else {
    for (std::uint64_t l = 0; l < tensor.header.shape.num_layers; ++l) layers.push_back(l);
  }
  const Provenance prov{input_digest, config_digest(config), config.capacity.seed, kToolVersion};

  std::vector<LayerReport> out;
  for (auto l : layers) {
    const ManifoldSet set = group_manifolds(tensor, l, config.scheme);
    LayerReport r = analyze_set(set, config);
    r.layer = l;
    r.provenance = prov;
    out.push_back(std::move(r));
  }
  return out;
}

enum class Coherence { coherent, incoherent, not_applicable };

inline std::string_view to_string(Coherence c) {
  switch (c) {
    case Coherence::coherent: return "coherent";
    case Coherence::incoherent: return "incoherent";
    case Coherence::not_applicable: return "n/a";
  }
  return "n/a";
}

/// Task a label scheme belongs to: the name up to the first '_'
/// ("sentiment_gold" -> "sentiment").
inline std::string scheme_task(std::string_view scheme) {
  return std::string(scheme.substr(0, scheme.find('_')));
}

/// Coherent iff the prompted task and the manifold-inducing task coincide.
inline Coherence tag_coherence(const std::string& prompt_task, const std::string& manifold_task,
                               const std::vector<std::string>& declared_tasks) {
  const auto p = scheme_task(prompt_task), m = scheme_task(manifold_task);
  for (const auto& name : {p, m}) {
    if (std::find(declared_tasks.begin(), declared_tasks.end(), name) == declared_tasks.end())
      throw KeyError("unknown task '" + name + "'");
  }
  return p == m ? Coherence::coherent : Coherence::incoherent;
}

struct TaskPair {
  std::string prompt_task;
  std::string manifold_task;
  Coherence coherence;
};

/// All (prompt task, manifold task) pairs over the declared tasks.
inline std::vector<TaskPair> enumerate_task_pairs(const std::vector<std::string>& tasks) {
  std::vector<TaskPair> out;
  for (const auto& p : tasks)
    for (const auto& m : tasks) out.push_back({p, m, tag_coherence(p, m, tasks)});
  return out;
}

/// Tasks declared by a header: the distinct scheme_task of each label scheme.
inline std::vector<std::string> declared_tasks(const EmbxHeader& h) {
  std::set<std::string> tasks;
  for (const auto& [name, labels] : h.label_schemes) tasks.insert(scheme_task(name));
  return {tasks.begin(), tasks.end()};
}

namespace detail {

inline std::string param_text(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace detail

/// Stable text name of an experimental condition, e.g.
/// "last_token/demonstrations/demo_seed=1/num_demonstrations=5/task=sentiment".
inline std::string condition_descriptor(const EmbxHeader& h) {
  std::string s = std::string(to_string(h.embedding_kind)) + "/" + std::string(to_string(h.condition));
  for (const auto& [key, value] : h.condition_params.items())  // keys iterate sorted
    s += "/" + key + "=" + detail::param_text(value);
  return s;
}

/// Coherence of a tensor's prompted task (condition_params.task) with `scheme`.
inline Coherence condition_coherence(const EmbxHeader& h, const std::string& scheme) {
  const auto it = h.condition_params.find("task");
  if (it == h.condition_params.end() || !it->is_string()) return Coherence::not_applicable;
  return tag_coherence(it->get<std::string>(), scheme, declared_tasks(h));
}

inline std::vector<ComparisonRow> to_rows(const std::vector<LayerReport>& reports,
                                          const std::string& condition, const std::string& scheme,
                                          Coherence coherence) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    for (const auto& [metric, result] : r.metrics) {
      ComparisonRow row;
      row.condition = condition;
      row.scheme = scheme;
      row.coherence = std::string(to_string(coherence));
      row.layer = r.layer;
      row.metric = std::string(to_string(metric));
      row.value = result.value;
      row.status = result.status;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Adds, for every group of conditions differing only in demo_seed, rows with
/// demo_seed=mean holding the mean value across seeds.
inline void add_seed_mean_rows(std::vector<ComparisonRow>& rows) {
  static constexpr std::string_view kKey = "/demo_seed=";
  using Key = std::tuple<std::string, std::string, std::string, std::uint64_t, std::string>;
  struct Acc {
    double sum = 0.0;
    int count = 0;
    bool complete = true;
  };
  std::map<Key, Acc> groups;
  for (const auto& r : rows) {
    const auto pos = r.condition.find(kKey);
    if (pos == std::string::npos) continue;
    const auto end = r.condition.find('/', pos + 1);
    const std::string cond = r.condition.substr(0, pos) + std::string(kKey) + "mean" +
                             (end == std::string::npos ? "" : r.condition.substr(end));
    auto& acc = groups[Key{cond, r.scheme, r.coherence, r.layer, r.metric}];
    if (r.value) {
      acc.sum += *r.value;
    } else {
      acc.complete = false;
    }
    ++acc.count;
  }
  for (const auto& [key, acc] : groups) {
    if (acc.count < 2) continue;
    ComparisonRow row;
    std::tie(row.condition, row.scheme, row.coherence, row.layer, row.metric) = key;
    if (acc.complete) {
      row.value = acc.sum / acc.count;
    } else {
      row.status = "incomplete_mean";
    }
    rows.push_back(std::move(row));
  }
}

/// Divides each row's value by the baseline value with the same
/// (layer, metric, scheme). Baseline rows are included with normalized value 1.
inline std::vector<ComparisonRow> normalize(std::vector<ComparisonRow> rows,
                                            std::vector<ComparisonRow> baseline) {
  using Key = std::tuple<std::uint64_t, std::string, std::string>;
  std::map<Key, const ComparisonRow*> index;
  for (const auto& b : baseline) index[Key{b.layer, b.metric, b.scheme}] = &b;

  auto apply = [&](ComparisonRow& r) {
    const auto it = index.find(Key{r.layer, r.metric, r.scheme});
    if (it == index.end())
      throw AlignmentError("no baseline row for layer " + std::to_string(r.layer) + ", metric " +
                           r.metric + ", scheme " + r.scheme);
    const auto& base = *it->second;
    r.normalized_value.reset();
    if (!r.value) return;
    if (!base.value) {
      if (r.status == "ok") r.status = "baseline_missing";
      return;
    }
    if (std::abs(*base.value) < 1e-12) {
      r.status = r.status == "ok" ? "baseline_zero" : r.status + ";baseline_zero";
      return;
    }
    r.normalized_value = *r.value / *base.value;
  };
  for (auto& r : rows) apply(r);
  for (auto& b : baseline) apply(b);
  rows.insert(rows.end(), std::make_move_iterator(baseline.begin()),
              std::make_move_iterator(baseline.end()));
  sort_rows(rows);
  return rows;
}

}  // namespace mancap
