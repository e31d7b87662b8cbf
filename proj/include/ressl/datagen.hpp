#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ressl {

using Features = std::vector<double>;

// Isotropic Gaussian mixture: classes [0, k_seen) are seen, the next k_unseen
// are near unseen classes. Far unseen classes reuse the near samples shifted
// by far_offset.
struct MixtureSpec {
  std::size_t d = 8;
  std::size_t k_seen = 5;
  std::size_t k_unseen = 5;
  std::vector<Features> class_means;  // k_seen + k_unseen entries
  double sigma = 0.15;
  Features far_offset;                // empty: default_far_offset()
  std::size_t n_pool = 500;
  std::size_t n_labeled = 100;
  std::size_t n_test_per_class = 200;

  void validate() const;
};

// Places class means uniformly at random in [low, high]^d.
std::vector<Features> random_class_means(std::size_t d, std::size_t count, double low, double high,
                                         std::uint64_t seed);

// 10x the largest pairwise distance between seen means, along the unit diagonal.
Features default_far_offset(const MixtureSpec& mix);

struct LabeledSample {
  Features x;
  int label = 0;
};

struct Pools {
  std::size_t d = 0;
  std::size_t k_seen = 0;
  std::size_t k_unseen = 0;
  std::size_t n_pool = 0;
  std::vector<std::vector<Features>> seen;         // [k_seen][n_pool]
  std::vector<std::vector<Features>> unseen_near;  // [k_unseen][n_pool]
  std::vector<std::vector<Features>> unseen_far;   // empty in tabular mode
  std::vector<LabeledSample> test;                  // seen labels only

  bool has_far() const noexcept { return !unseen_far.empty(); }
  std::size_t seen_total() const noexcept { return k_seen * n_pool; }
  // Absolute class index of the first unseen class.
  std::size_t first_unseen() const noexcept { return k_seen; }
};

Pools sample_pools(const MixtureSpec& mix, std::uint64_t seed);

struct TabularSource {
  std::string path;
  std::string label_column;
  std::vector<std::string> seen_labels;
  std::vector<std::string> unseen_labels;
  std::size_t n_pool = 0;
  std::size_t n_test_per_class = 0;
};

// Subsamples per-class pools from a CSV and min-max scales every feature with
// the statistics of the seen pool. No far pool is available.
Pools load_tabular_pools(const TabularSource& src, std::uint64_t seed);

// counts[k] = floor(n_max * c_ib^(k/(k_u-1))), k = 0..k_u-1; [n_max] when k_u = 1.
std::vector<std::size_t> imbalance_counts(double c_ib, std::size_t k_u, std::size_t n_max);

enum class SplitMode { ressl, legacy, rs_sweep };
enum class Nearness { near, far };
// per_class: each source class contributes up to ceil(r_u * n_pool).
// fixed_total: the unseen total is r_u * k_unseen * n_pool regardless of how
// many source classes are used.
enum class UnseenBudget { per_class, fixed_total };

std::string_view split_mode_name(SplitMode m) noexcept;
std::string_view nearness_name(Nearness n) noexcept;
std::string_view unseen_budget_name(UnseenBudget b) noexcept;

struct SplitSpec {
  SplitMode mode = SplitMode::ressl;
  double r_s = 1.0;
  double r_u = 0.0;
  std::size_t c_n = 1;
  std::optional<std::vector<std::size_t>> c_i;  // absolute unseen class indices
  Nearness nearness = Nearness::near;
  double c_ib = 1.0;
  std::optional<std::size_t> legacy_total;
  std::optional<double> legacy_rho;
  std::uint64_t seed = 0;
  UnseenBudget unseen_budget = UnseenBudget::per_class;

  void validate(const Pools& pools) const;
};

// Audit-only provenance of an unlabeled sample. Training code never reads it.
struct Provenance {
  int origin_class = 0;
  bool seen = false;
  std::size_t pool_index = 0;

  bool operator==(const Provenance&) const = default;
  auto operator<=>(const Provenance&) const = default;
};

struct BundleCounts {
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled_seen = 0;
  std::size_t n_unlabeled_unseen = 0;
  std::map<int, std::size_t> unseen_per_class;
  // Unrounded targets; rounded half-to-even into the counts above.
  double seen_target_exact = 0.0;
  double unseen_target_exact = 0.0;

  bool operator==(const BundleCounts&) const = default;
};

struct DatasetBundle {
  std::size_t d = 0;
  std::size_t k_seen = 0;
  std::vector<LabeledSample> labeled;
  std::vector<Features> unlabeled;
  std::vector<Provenance> audit;  // parallel to unlabeled
  std::vector<LabeledSample> test;
  BundleCounts counts;
};

// Unlabeled-seen size for the RE-SSL protocol: round(r_s * (|seen pool| - n_labeled)).
std::size_t seen_unlabeled_size(const Pools& pools, double r_s, std::size_t n_labeled);
// Per-class unseen quotas after the imbalance profile and the total cap, in
// source-class order.
std::vector<std::size_t> unseen_quotas(const Pools& pools, const SplitSpec& spec);
// The unseen source classes: c_i when given, else the last c_n unseen classes.
std::vector<std::size_t> unseen_source_classes(const Pools& pools, const SplitSpec& spec);

DatasetBundle build_ressl(const Pools& pools, const SplitSpec& spec, std::size_t n_labeled);
DatasetBundle build_legacy(const Pools& pools, std::size_t total_u, double rho_unseen,
                           std::uint64_t seed, std::size_t n_labeled);
// Dispatches on spec.mode.
DatasetBundle build_bundle(const Pools& pools, const SplitSpec& spec, std::size_t n_labeled);

// Line-delimited JSON records:
// {"split": ..., "origin_class": ..., "seen": ..., "x": [...]}
void write_pools_jsonl(std::ostream& out, const Pools& pools);
void write_bundle_jsonl(std::ostream& out, const DatasetBundle& bundle);

double round_half_even(double v) noexcept;

}  // namespace ressl
