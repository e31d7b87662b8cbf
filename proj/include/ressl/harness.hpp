#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ressl/datagen.hpp"
#include "ressl/learner.hpp"
#include "ressl/metrics.hpp"
#include "ressl/sslzoo.hpp"

namespace ressl {

struct TabularConfig {
  TabularSource source;
  std::size_t n_labeled = 0;
};

// One sweep: algorithms x grid values x seeds over a single factor.
struct ExperimentSpec {
  std::variant<MixtureSpec, TabularConfig> data;
  std::vector<Algorithm> algorithms;
  Factor factor = Factor::r;
  std::vector<double> grid;
  SplitSpec fixed;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t master_seed = 0;
  TrainConfig train;
  Thresholds thresholds;
  std::string output_dir = "out";

  std::size_t n_labeled() const;
  void validate() const;
};

std::vector<double> default_grid(Factor factor, std::size_t k_seen, std::size_t k_unseen);

// The full default experiment: every zoo algorithm over the 7-point r grid,
// seeds {0,1,2}, on the default 5-seen/5-unseen mixture.
ExperimentSpec default_experiment();

// JSON mirrors ExperimentSpec; unknown keys are rejected with ConfigError.
ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec load_spec(const std::string& path);

// Split spec for one grid value (base = the r_u = 0 reference).
SplitSpec split_for_value(const ExperimentSpec& spec, double value, std::optional<Nearness> condition);
SplitSpec split_for_base(const ExperimentSpec& spec);

// Seeds derived per seed value only, never per factor value or algorithm,
// so every grid point of a seed shares its pools, D_L and initial weights.
std::uint64_t pool_seed(std::uint64_t master, std::uint64_t seed) noexcept;
std::uint64_t split_seed(std::uint64_t master, std::uint64_t seed) noexcept;
std::uint64_t train_seed(std::uint64_t master, std::uint64_t seed) noexcept;

Pools make_pools(const ExperimentSpec& spec, std::uint64_t seed);

struct CurveEntry {
  std::string algorithm;
  std::string label;  // factor name, or "nearness:near" / "nearness:far"
  Factor factor = Factor::r;
  std::vector<std::uint64_t> seeds;
  std::optional<CurvePoint> base;  // r_u = 0 reference, excluded from scoring
  AccuracyCurve curve;
};

struct CurveSet {
  std::vector<CurveEntry> entries;
  std::optional<nlohmann::json> spec;  // provenance
  std::string content_hash;            // FNV-1a of curves.csv
};

struct RunOptions {
  std::size_t threads = 1;
  // Cell execution order permutation seed; results never depend on it.
  std::optional<std::uint64_t> shuffle_order;
};

std::size_t resolve_threads(std::optional<std::size_t> flag);

CurveSet run_sweep(const ExperimentSpec& spec, const RunOptions& opts = {});

struct ScoredCurve {
  std::string algorithm;
  std::string label;
  Factor factor = Factor::r;
  RobustnessReport report;
  std::vector<RobustnessReport> per_seed;
};

// Ordered factors get all five metrics; C_i and nearness GM only; curves too
// short for slopes get GM plus a warning.
std::vector<ScoredCurve> score_curves(const CurveSet& curves, const Thresholds& thresholds);

// curves.csv: algorithm,factor,value,seed,accuracy
std::string curves_csv(const CurveSet& curves);
CurveSet read_curves_csv(std::istream& in);
CurveSet merge_curves(std::vector<CurveSet> sets);

std::string metrics_csv(const std::vector<ScoredCurve>& scored);
std::string summary_markdown(const std::vector<ScoredCurve>& scored, const CurveSet& curves);
nlohmann::json report_to_json(const RobustnessReport& r);
RobustnessReport report_from_json(const nlohmann::json& j);
nlohmann::json report_document(const std::vector<ScoredCurve>& scored, const CurveSet& curves,
                               const Thresholds& thresholds);

// Writes curves.csv, metrics.csv, report.json and summary.md into dir.
void emit_report(const std::vector<ScoredCurve>& scored, const CurveSet& curves,
                 const Thresholds& thresholds, const std::string& dir);

// GM cross-table over the non-nearness factors present for every algorithm.
std::optional<GmTable> gm_cross_table(const std::vector<ScoredCurve>& scored);

struct ReplayRow {
  std::string method;
  RobustnessReport report;
};

// Long-format `method,factor_value,accuracy`; rows with factor_value `base`
// are skipped.
std::vector<ReplayRow> replay(std::istream& in, const Thresholds& thresholds = {});
std::vector<ReplayRow> replay_file(const std::string& path, const Thresholds& thresholds = {});
// method,r_slope,gm,bad,wad,p_ad_ge0
std::string replay_csv(const std::vector<ReplayRow>& rows);

}  // namespace ressl
