#pragma once

// Command-line front end. Kept in a header so tests can drive it in-process.
//
// Exit codes: 0 success, 1 validation error, 2 only flagged estimates,
// 3 I/O error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mancap/mancap.hpp"

namespace mancap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitFlagged = 2;
inline constexpr int kExitIo = 3;

struct Options {
  std::vector<std::string> inputs;
  std::string baseline;
  std::string schemes;
  std::string layers = "all";
  std::string metrics = "capacity,dimension,radius,axes_alignment,center_axes_alignment";
  int k_axes = 5;
  int points_per_class = 50;
  std::uint64_t seed = 0;
  int trials_coarse = 50;
  int trials_fine = 200;
  int grid = 9;
  std::string centering = "origin";
  bool capacity_center = false;
  std::string format = "csv";
  std::string output;
  unsigned workers = 0;

  // synth
  SynthSpec synth;
  bool point_classes = false;
  std::string synth_scheme = "class";

  // validate-cover
  std::string cover_n = "3,4,5,8";
  std::string cover_d = "1,2,3";
  int cover_trials = 2000;
  int cover_dim = 1000;  // D >> n keeps fixed class positions near-orthogonal
  double cover_tolerance = 0.04;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + ": '" + s + "' is not a nonnegative integer");
  }
}

inline std::vector<std::uint64_t> parse_uint_list(const std::string& s, const char* what) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) out.push_back(parse_uint(item, what));
  if (out.empty()) throw ValidationError(std::string(what) + ": empty list");
  return out;
}

inline OutputFormat parse_format(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  throw ValidationError("format must be csv or json, got '" + s + "'");
}

inline CapacityConfig capacity_config(const Options& o) {
  CapacityConfig c;
  c.n_coarse = o.trials_coarse;
  c.n_fine = o.trials_fine;
  c.grid_size = o.grid;
  c.seed = o.seed;
  c.points_per_class = o.points_per_class;
  c.center_global_mean = o.capacity_center;
  c.workers = o.workers;
  return c;
}

inline AnalysisConfig analysis_config(const Options& o, const std::string& scheme) {
  AnalysisConfig c;
  c.scheme = scheme;
  if (o.layers != "all") c.layers = parse_uint_list(o.layers, "--layers");
  c.metrics.clear();
  for (const auto& m : split_list(o.metrics)) c.metrics.push_back(metric_from_string(m));
  c.capacity = capacity_config(o);
  c.k_axes = o.k_axes;
  if (o.centering == "origin") {
    c.centering = Centering::origin;
  } else if (o.centering == "global-mean") {
    c.centering = Centering::global_mean;
  } else {
    throw ValidationError("--centering must be origin or global-mean");
  }
  return c;
}

struct LoadedInput {
  EmbeddingTensor tensor;
  std::string digest;
};

inline LoadedInput load_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  std::istringstream stream(bytes, std::ios::binary);
  return {read_embx(stream), sha256_hex(bytes)};
}

// Rows for every requested scheme of one input.
inline std::vector<ComparisonRow> analyze_input(const LoadedInput& input, const Options& o,
                                                ComparisonReport& report) {
  const auto schemes = split_list(o.schemes);
  if (schemes.empty()) throw ValidationError("--scheme is required");
  const std::string condition = condition_descriptor(input.tensor.header);
  std::vector<ComparisonRow> rows;
  for (const auto& scheme : schemes) {
    const auto config = analysis_config(o, scheme);
    const auto reports = analyze(input.tensor, config, input.digest);
    auto part = to_rows(reports, condition, scheme, condition_coherence(input.tensor.header, scheme));
    rows.insert(rows.end(), part.begin(), part.end());
    if (!reports.empty()) report.provenance[condition] = reports.front().provenance;
  }
  return rows;
}

class OutputSink {
 public:
  OutputSink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot open '" + path + "' for writing");
      out_ = &file_;
    }
  }
  std::ostream& stream() { return *out_; }
  void finish() {
    out_->flush();
    if (!*out_) throw IoError("failed writing output");
  }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

inline int run_analyze(const Options& o, bool with_baseline, std::ostream& out) {
  ComparisonReport report;
  std::vector<ComparisonRow> rows;
  std::set<std::string> seen;
  for (const auto& path : o.inputs) {
    const auto input = load_input(path);
    const auto cond = condition_descriptor(input.tensor.header);
    if (!seen.insert(cond).second)
      throw ValidationError("inputs share the condition descriptor '" + cond + "'");
    auto part = analyze_input(input, o, report);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  add_seed_mean_rows(rows);
  if (with_baseline) {
    const auto base = load_input(o.baseline);
    auto base_rows = analyze_input(base, o, report);
    rows = normalize(std::move(rows), std::move(base_rows));
  }
  sort_rows(rows);
  // A baseline that is also an input would otherwise appear twice.
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  report.rows = std::move(rows);

  OutputSink sink(o.output, out);
  emit(report, parse_format(o.format), sink.stream());
  sink.finish();
  return has_flagged_rows(report) ? kExitFlagged : kExitOk;
}

inline int run_synth(const Options& o, std::ostream& err) {
  if (o.output.empty()) throw ValidationError("synth: --output is required");
  const ManifoldSet set = o.point_classes
                              ? generate_point_classes(o.synth.n_classes, o.synth.ambient_dim,
                                                       o.synth.seed)
                              : generate_gaussian_manifolds(o.synth);
  const auto bytes = write_embx_file(to_embedding_tensor(set, o.synth_scheme), o.output);
  err << "wrote " << bytes << " bytes to " << o.output << '\n';
  return kExitOk;
}

inline int run_validate_cover(const Options& o, std::ostream& out) {
  const auto format = parse_format(o.format);
  nlohmann::json rows = nlohmann::json::array();
  OutputSink sink(o.output, out);
  auto& s = sink.stream();
  if (format == OutputFormat::csv) s << "n,d,trials,f_hat,cover,abs_diff,pass\n";
  bool all_pass = true;
  for (auto n : parse_uint_list(o.cover_n, "--n")) {
    const auto set = generate_point_classes(static_cast<std::int64_t>(n), o.cover_dim, o.seed);
    const CapacityProblem problem(set);
    for (auto d : parse_uint_list(o.cover_d, "--d")) {
      const auto e = estimate_f(problem, static_cast<std::int64_t>(d), o.cover_trials, o.seed,
                                o.workers);
      const double exact = cover_probability(n, d);
      const double diff = std::abs(e.f_hat - exact);
      const bool pass = diff <= o.cover_tolerance;
      all_pass = all_pass && pass;
      if (format == OutputFormat::csv) {
        s << n << ',' << d << ',' << e.trials << ',' << format_float(e.f_hat) << ','
          << format_float(exact) << ',' << format_float(diff) << ',' << (pass ? "true" : "false")
          << '\n';
      } else {
        rows.push_back({{"n", n}, {"d", d}, {"trials", e.trials},
                        {"f_hat", round_float(e.f_hat)}, {"cover", round_float(exact)},
                        {"abs_diff", round_float(diff)}, {"pass", pass}});
      }
    }
  }
  if (format == OutputFormat::json) s << nlohmann::json{{"rows", rows}}.dump(2) << '\n';
  sink.finish();
  return all_pass ? kExitOk : kExitFlagged;
}

inline int run_capacity_curve(const Options& o, std::ostream& out) {
  if (o.inputs.size() != 1) throw ValidationError("capacity-curve: exactly one --input required");
  const auto schemes = split_list(o.schemes);
  if (schemes.size() != 1) throw ValidationError("capacity-curve: exactly one --scheme required");
  const auto layers = parse_uint_list(o.layers == "all" ? "0" : o.layers, "--layers");
  if (layers.size() != 1) throw ValidationError("capacity-curve: exactly one layer required");

  const auto input = load_input(o.inputs.front());
  const auto set = group_manifolds(input.tensor, layers.front(), schemes.front());
  const auto est = manifold_capacity(set, capacity_config(o));

  OutputSink sink(o.output, out);
  auto& s = sink.stream();
  if (parse_format(o.format) == OutputFormat::csv) {
    s << "d_proj,trials,successes,f_hat\n";
    for (const auto& e : est.curve.entries)
      s << e.d_proj << ',' << e.trials << ',' << e.successes << ',' << format_float(e.f_hat)
        << '\n';
  } else {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& e : est.curve.entries)
      curve.push_back({{"d_proj", e.d_proj}, {"trials", e.trials}, {"successes", e.successes},
                       {"f_hat", round_float(e.f_hat)}});
    nlohmann::json j{{"alpha", round_float(est.alpha)},
                     {"d_star", round_float(est.d_star)},
                     {"status", std::string(to_string(est.status))},
                     {"quality_warning", est.quality_warning ? nlohmann::json(*est.quality_warning)
                                                             : nlohmann::json(nullptr)},
                     {"fit", {{"midpoint", round_float(est.fit.midpoint)},
                              {"slope", round_float(est.fit.slope)},
                              {"residual", round_float(est.fit.residual)}}},
                     {"seed", est.curve.seed},
                     {"n_points", est.curve.n_points},
                     {"n_classes", est.curve.n_classes},
                     {"points_per_class", est.points_per_class},
                     {"input_digest", input.digest},
                     {"curve", curve}};
    s << j.dump(2) << '\n';
  }
  sink.finish();
  return est.status == CapacityStatus::ok && !est.quality_warning ? kExitOk : kExitFlagged;
}

inline void add_analysis_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--input", o.inputs, "EMBX input file(s)")->required();
  cmd->add_option("--scheme", o.schemes, "Label scheme name(s), comma-separated")->required();
  cmd->add_option("--layers", o.layers, "all | i,j,k");
  cmd->add_option("--metrics", o.metrics, "Comma-separated metric list");
  cmd->add_option("--k-axes", o.k_axes, "Principal axes compared per manifold");
  cmd->add_option("--points-per-class", o.points_per_class, "Capacity subsampling cap (0 = none)");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--trials-coarse", o.trials_coarse, "Trials per coarse probe");
  cmd->add_option("--trials-fine", o.trials_fine, "Trials per grid point");
  cmd->add_option("--grid", o.grid, "Grid points in the fine phase");
  cmd->add_option("--centering", o.centering, "origin | global-mean (center-axes alignment)");
  cmd->add_flag("--capacity-center", o.capacity_center,
                "Subtract the global mean before capacity estimation");
  cmd->add_option("--format", o.format, "csv | json");
  cmd->add_option("--output", o.output, "Output path (default stdout)");
  cmd->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Representational geometry of labeled embedding manifolds", "mancap"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.set_config("--config", "", "Read flags from a TOML/INI file (flags override it)");
  app.require_subcommand(1);
  Options o;

  auto* analyze_cmd = app.add_subcommand("analyze", "Layerwise geometry and capacity");
  detail::add_analysis_flags(analyze_cmd, o);

  auto* compare_cmd = app.add_subcommand("compare", "Analyze conditions and normalize by a baseline");
  detail::add_analysis_flags(compare_cmd, o);
  compare_cmd->add_option("--baseline", o.baseline, "Baseline EMBX file")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic manifold set as EMBX");
  synth_cmd->add_option("--classes", o.synth.n_classes, "Number of classes P");
  synth_cmd->add_option("--points", o.synth.points_per_class, "Points per class");
  synth_cmd->add_option("--dim", o.synth.ambient_dim, "Ambient dimension D");
  synth_cmd->add_option("--intrinsic-dim", o.synth.intrinsic_dim, "Intrinsic dimension k");
  synth_cmd->add_option("--radius", o.synth.radius_scale, "Radius scale r");
  synth_cmd->add_option("--centroid-scale", o.synth.centroid_scale, "Centroid scale c");
  synth_cmd->add_option("--shared-fraction", o.synth.shared_axes_fraction,
                        "Fraction of axes drawn from a shared frame");
  synth_cmd->add_option("--seed", o.synth.seed, "Random seed");
  synth_cmd->add_flag("--point-classes", o.point_classes, "One standard-normal point per class");
  synth_cmd->add_option("--scheme", o.synth_scheme, "Label scheme name");
  synth_cmd->add_option("--output", o.output, "Output EMBX path")->required();

  auto* cover_cmd = app.add_subcommand(
      "validate-cover", "Compare empirical separability with the closed-form Cover probability");
  cover_cmd->add_option("--n", o.cover_n, "Point counts, comma-separated");
  cover_cmd->add_option("--d", o.cover_d, "Projection dimensions, comma-separated");
  cover_cmd->add_option("--trials", o.cover_trials, "Trials per (n, d)");
  cover_cmd->add_option("--dim", o.cover_dim, "Ambient dimension of the point classes");
  cover_cmd->add_option("--tolerance", o.cover_tolerance, "Allowed |f_hat - cover|");
  cover_cmd->add_option("--seed", o.seed, "Random seed");
  cover_cmd->add_option("--format", o.format, "csv | json");
  cover_cmd->add_option("--output", o.output, "Output path (default stdout)");
  cover_cmd->add_option("--workers", o.workers, "Worker threads (0 = all cores)");

  auto* curve_cmd = app.add_subcommand("capacity-curve", "Dump the separability curve of one layer");
  detail::add_analysis_flags(curve_cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*analyze_cmd) return detail::run_analyze(o, false, out);
    if (*compare_cmd) return detail::run_analyze(o, true, out);
    if (*synth_cmd) return detail::run_synth(o, err);
    if (*cover_cmd) return detail::run_validate_cover(o, out);
    if (*curve_cmd) return detail::run_capacity_curve(o, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace mancap::cli
