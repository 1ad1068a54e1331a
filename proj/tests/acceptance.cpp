// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "mancap/mancap.hpp"
#include "oracles.hpp"

namespace {

using namespace mancap;

// Pinned tolerances.
constexpr double kCoverTolerance = 0.04;
constexpr int kCoverTrials = 2000;
constexpr double kCoverSeconds = 60.0;
constexpr double kAlphaLow = 1.7, kAlphaHigh = 2.3;
constexpr double kDStarCenter = 30.0, kDStarTolerance = 4.0;
constexpr double kPointCapacitySeconds = 300.0;
constexpr int kFuzzInstances = 1000;
constexpr double kPrExact = 1e-9;
constexpr double kPrInvariance = 1e-9;
constexpr double kAlignmentTolerance = 1e-6;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mancap_acceptance_" + name)).string();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "mancap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::map<std::string, std::string>> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> columns;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) return rows;
  columns = split(line);
  while (std::getline(in, line)) {
    const auto fields = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < columns.size() && i < fields.size(); ++i) row[columns[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return format_float(v); }

Outcome cover_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run({"validate-cover", "--n", "3,4,5,8", "--d", "1,2,3", "--trials",
                      std::to_string(kCoverTrials), "--tolerance", fmt(kCoverTolerance)});
  const double elapsed = seconds_since(t0);
  const auto rows = parse_csv(r.out);
  o.check(rows.size() == 12, "expected 12 cells, got " + std::to_string(rows.size()));
  double worst = 0.0;
  for (const auto& row : rows) {
    const auto n = std::stoull(row.at("n")), d = std::stoull(row.at("d"));
    const double f = std::stod(row.at("f_hat"));
    const double exact = oracle::cover_fraction(static_cast<int>(n), static_cast<int>(d));
    worst = std::max(worst, std::abs(f - exact));
    o.check(std::abs(f - exact) <= kCoverTolerance,
            "N=" + row.at("n") + " d=" + row.at("d") + " f_hat=" + row.at("f_hat"));
    o.check(std::stod(row.at("cover")) == exact, "closed form mismatch at N=" + row.at("n"));
  }
  o.check(cover_probability(3, 2) == 0.75 && cover_probability(4, 2) == 0.5 &&
              cover_probability(5, 3) == 0.6875,
          "reference points");
  o.check(r.code == cli::kExitOk, "exit code " + std::to_string(r.code));
  o.check(elapsed < kCoverSeconds, "runtime " + fmt(elapsed) + " s");
  if (o.pass) o.detail = "max |f_hat - cover| = " + fmt(worst) + ", " + fmt(elapsed) + " s";
  return o;
}

Outcome point_class_capacity() {
  Outcome o;
  const auto file = tmp_path("points.embx");
  const auto s = run({"synth", "--point-classes", "--classes", "60", "--dim", "200", "--seed", "0",
                      "--output", file});
  o.check(s.code == cli::kExitOk, "synth failed: " + s.err);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run({"capacity-curve", "--input", file, "--scheme", "class", "--format", "json"});
  const double elapsed = seconds_since(t0);
  if (r.out.empty()) {
    o.check(false, "no output: " + r.err);
    return o;
  }
  const auto j = nlohmann::json::parse(r.out);
  const double alpha = j.at("alpha").get<double>();
  const double d_star = j.at("d_star").get<double>();
  o.check(alpha >= kAlphaLow && alpha <= kAlphaHigh, "alpha " + fmt(alpha));
  o.check(std::abs(d_star - kDStarCenter) <= kDStarTolerance, "D* " + fmt(d_star));
  o.check(j.at("status") == "ok", "status " + j.at("status").get<std::string>());
  o.check(elapsed < kPointCapacitySeconds, "runtime " + fmt(elapsed) + " s");
  if (o.pass)
    o.detail = "alpha = " + fmt(alpha) + ", D* = " + fmt(d_star) + ", " + fmt(elapsed) + " s";
  return o;
}

Outcome separability_fuzz() {
  Outcome o;
  Rng rng(derive_seed({0xacce97ULL}));
  int agree = 0;
  for (int iter = 0; iter < kFuzzInstances; ++iter) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(9));
    const auto pts = oracle::gaussian(n, 2, rng);
    std::vector<int> signs(static_cast<std::size_t>(n));
    do {
      for (auto& v : signs) v = rng.below(2) ? 1 : -1;
    } while (std::count(signs.begin(), signs.end(), 1) == 0 ||
             std::count(signs.begin(), signs.end(), -1) == 0);
    agree += is_separable(pts, signs) == oracle::angular_gap_separable(pts, signs);
  }
  o.check(agree == kFuzzInstances, std::to_string(kFuzzInstances - agree) + " disagreements");
  if (o.pass) o.detail = std::to_string(agree) + "/" + std::to_string(kFuzzInstances) + " agree";
  return o;
}

Outcome participation_ratio_suite() {
  Outcome o;
  const std::vector<double> two{1.0, 1.0}, four_one{4.0, 1.0};
  o.check(std::abs(participation_ratio_from_eigenvalues(two) - 2.0) <= kPrExact, "(1,1)");
  o.check(std::abs(participation_ratio_from_eigenvalues(four_one) - 25.0 / 17.0) <= kPrExact, "(4,1)");
  Eigen::MatrixXd cross(4, 2);
  cross << 2, 0, -2, 0, 0, 1, 0, -1;
  o.check(std::abs(participation_ratio(cross) - 25.0 / 17.0) <= kPrExact, "(4,1) point cloud");

  Rng rng(derive_seed({0x9a11ULL}));
  const Eigen::MatrixXd frame = oracle::random_orthogonal(50, rng).leftCols(10);
  const Eigen::MatrixXd iso = oracle::gaussian(2000, 10, rng) * frame.transpose();
  const double pr = participation_ratio(iso);
  o.check(pr >= 9.0 && pr <= 10.0, "isotropic PR " + fmt(pr));

  const Eigen::MatrixXd pts = oracle::gaussian(80, 12, rng);
  const double base = participation_ratio(pts);
  const Eigen::MatrixXd q = oracle::random_orthogonal(12, rng);
  o.check(std::abs(participation_ratio(pts * q.transpose()) - base) <= kPrInvariance * base,
          "rotation");
  for (double c : {1e-3, 0.37, 2.0, 1e4})
    o.check(std::abs(participation_ratio(c * pts) - base) <= kPrInvariance * base,
            "scale " + fmt(c));
  if (o.pass) o.detail = "isotropic PR = " + fmt(pr);
  return o;
}

Outcome radius_suite() {
  Outcome o;
  Eigen::MatrixXd tri(3, 2);
  tri << 0, 0, 3, 0, 0, 4;
  o.check(manifold_radius(tri) == 5.0, "fixture");
  Rng rng(derive_seed({0x4ad1ULL}));
  double worst_rel = 0.0;
  for (int iter = 0; iter < 50; ++iter) {
    const auto pts = oracle::gaussian(2 + static_cast<Eigen::Index>(rng.below(40)), 8, rng);
    const double r = manifold_radius(pts);
    for (double c : {0.25, 2.0, 1024.0})
      o.check(manifold_radius(c * pts) == c * r, "power-of-two scale " + fmt(c));
    for (double c : {0.3, 7.1, 123.456}) {
      const double rel = std::abs(manifold_radius(c * pts) - c * r) / (c * r);
      worst_rel = std::max(worst_rel, rel);
    }
  }
  // Non-dyadic factors round each coordinate; allow a few ulp.
  o.check(worst_rel <= 4 * std::numeric_limits<double>::epsilon(), "rel error " + fmt(worst_rel));
  if (o.pass) o.detail = "worst relative error for non-dyadic c = " + fmt(worst_rel);
  return o;
}

Outcome invariance_and_determinism() {
  Outcome o;
  SynthSpec spec;
  spec.n_classes = 6;
  spec.points_per_class = 20;
  spec.ambient_dim = 48;
  spec.seed = 3;
  const auto set = generate_gaussian_manifolds(spec);
  const CapacityProblem base(set);
  int compared = 0;
  for (double c : {0.5, 3.7, 1e3, 1e-3}) {
    ManifoldSet scaled = set;
    for (auto& m : scaled.manifolds) m *= c;
    const CapacityProblem problem(scaled);
    for (std::int64_t d = 1; d <= 30; d += 3) {
      for (std::int64_t t = 0; t < 50; ++t) {
        Rng a = trial_rng(11, d, t), b = trial_rng(11, d, t);
        const bool same = base.trial(d, a) == problem.trial(d, b);
        o.check(same, "trial differs at c=" + fmt(c) + " d=" + std::to_string(d));
        ++compared;
        if (!same) return o;
      }
    }
  }

  const auto file = tmp_path("determinism.embx");
  write_embx_file(to_embedding_tensor(set, "class"), file);
  std::vector<std::string> args{"analyze", "--input", file, "--scheme", "class", "--k-axes", "3",
                                "--format", "json", "--workers"};
  auto one = args, eight = args;
  one.push_back("1");
  eight.push_back("8");
  const auto a = run(one), b = run(eight);
  o.check(a.code == b.code, "exit codes differ");
  o.check(!a.out.empty() && a.out == b.out, "pipeline output differs between 1 and 8 workers");
  if (o.pass)
    o.detail = std::to_string(compared) + " scaled trials identical; outputs byte-identical (" +
               std::to_string(a.out.size()) + " bytes)";
  return o;
}

Outcome synth_end_to_end() {
  Outcome o;
  const auto aligned = tmp_path("aligned.embx");
  auto s = run({"synth", "--classes", "5", "--points", "50", "--dim", "32", "--intrinsic-dim", "1",
                "--shared-fraction", "1", "--seed", "1", "--output", aligned});
  o.check(s.code == cli::kExitOk, "synth aligned: " + s.err);
  auto r = run({"analyze", "--input", aligned, "--scheme", "class", "--k-axes", "1", "--metrics",
                "axes_alignment"});
  double alignment = std::nan("");
  for (const auto& row : parse_csv(r.out))
    if (row.at("metric") == "axes_alignment") alignment = std::stod(row.at("value"));
  o.check(std::abs(alignment - 1.0) <= kAlignmentTolerance, "axes_alignment " + fmt(alignment));

  const auto flat = tmp_path("flat.embx");
  s = run({"synth", "--classes", "5", "--points", "20", "--dim", "16", "--radius", "0", "--seed",
           "2", "--output", flat});
  o.check(s.code == cli::kExitOk, "synth r=0: " + s.err);
  r = run({"analyze", "--input", flat, "--scheme", "class", "--metrics", "radius"});
  int radius_rows = 0;
  for (const auto& row : parse_csv(r.out)) {
    if (row.at("metric") != "radius") continue;
    ++radius_rows;
    o.check(!row.at("value").empty() && std::stod(row.at("value")) == 0.0,
            "radius " + row.at("value"));
  }
  o.check(radius_rows > 0, "no radius rows");

  const auto cond = tmp_path("self.embx");
  s = run({"synth", "--classes", "4", "--points", "20", "--dim", "24", "--seed", "3", "--output",
           cond});
  r = run({"compare", "--input", cond, "--baseline", cond, "--scheme", "class", "--k-axes", "2"});
  int normalized = 0;
  for (const auto& row : parse_csv(r.out)) {
    ++normalized;
    o.check(row.at("normalized_value") == "1", row.at("metric") + " normalized " +
                                                    row.at("normalized_value"));
  }
  o.check(normalized == 5, "expected 5 rows, got " + std::to_string(normalized));
  if (o.pass)
    o.detail = "axes_alignment = " + fmt(alignment) + "; " + std::to_string(radius_rows) +
               " zero radius row(s); " + std::to_string(normalized) + " rows normalized to 1";
  return o;
}

Outcome flag_behavior() {
  Outcome o;
  Rng rng(derive_seed({0xf1a9ULL}));
  const Eigen::MatrixXd pts = oracle::gaussian(30, 12, rng);
  const auto file = tmp_path("overlap.embx");
  write_embx_file(to_embedding_tensor(ManifoldSet{{pts, pts, pts}, {"a", "b", "c"}, 12}, "class"),
                  file);
  const auto r = run({"analyze", "--input", file, "--scheme", "class", "--k-axes", "2"});
  std::string status;
  for (const auto& row : parse_csv(r.out))
    if (row.at("metric") == "capacity") status = row.at("status");
  o.check(status == "not_separable_at_full_dim", "capacity status '" + status + "'");
  o.check(r.code == cli::kExitFlagged, "exit code " + std::to_string(r.code));
  if (o.pass) o.detail = "status " + status + ", exit code " + std::to_string(r.code);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"cover-oracle agreement", cover_oracle},
      {"point-class capacity", point_class_capacity},
      {"separability vs angular-gap oracle", separability_fuzz},
      {"participation ratio suite", participation_ratio_suite},
      {"radius fixtures and homogeneity", radius_suite},
      {"invariance and determinism", invariance_and_determinism},
      {"synth-to-report end to end", synth_end_to_end},
      {"flag behavior", flag_behavior},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
