#include "ressl/datagen.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/rng.hpp"

namespace ressl {

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Features draw_gaussian(const Features& mean, double sigma, Rng& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  Features x(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) x[j] = mean[j] + noise(rng);
  return x;
}

double distance(const Features& a, const Features& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

struct SeenSplit {
  std::vector<std::pair<std::size_t, std::size_t>> labeled;    // (class, pool index)
  std::vector<std::pair<std::size_t, std::size_t>> remaining;  // shuffled
};

// Stratified labeled draw plus a seeded ordering of the rest. Depends only on
// (pools shape, seed, n_labeled), so every factor value sees the same D_L and
// the same candidate order for the unlabeled seen part.
SeenSplit split_seen(const Pools& pools, std::uint64_t seed, std::size_t n_labeled) {
  if (n_labeled == 0 || n_labeled % pools.k_seen != 0)
    throw ConfigError("n_labeled must be a positive multiple of k_seen");
  const std::size_t per_class = n_labeled / pools.k_seen;
  if (per_class > pools.n_pool)
    throw ConstructionError("n_labeled exceeds the seen pool (" + std::to_string(per_class) +
                            " per class > " + std::to_string(pools.n_pool) + ")");
  SeenSplit out;
  for (std::size_t c = 0; c < pools.k_seen; ++c) {
    const auto perm = permutation(pools.n_pool, make_rng(seed, "seen-perm", {c}));
    for (std::size_t i = 0; i < perm.size(); ++i) {
      (i < per_class ? out.labeled : out.remaining).emplace_back(c, perm[i]);
    }
  }
  std::shuffle(out.remaining.begin(), out.remaining.end(), make_rng(seed, "unlabeled-seen"));
  return out;
}

struct UnlabeledDraft {
  std::vector<Features> x;
  std::vector<Provenance> audit;
};

DatasetBundle assemble(const Pools& pools, const SeenSplit& split, std::size_t n_seen_u,
                       const std::vector<std::size_t>& unseen_classes,
                       const std::vector<std::size_t>& quotas,
                       const std::vector<std::vector<Features>>& unseen_pool, std::uint64_t seed) {
  DatasetBundle b;
  b.d = pools.d;
  b.k_seen = pools.k_seen;
  b.test = pools.test;
  for (const auto& [c, i] : split.labeled)
    b.labeled.push_back({pools.seen[c][i], static_cast<int>(c)});

  if (n_seen_u > split.remaining.size())
    throw ConstructionError("seen unlabeled quota " + std::to_string(n_seen_u) +
                            " exceeds the remaining seen pool by " +
                            std::to_string(n_seen_u - split.remaining.size()));

  UnlabeledDraft draft;
  for (std::size_t k = 0; k < n_seen_u; ++k) {
    const auto [c, i] = split.remaining[k];
    draft.x.push_back(pools.seen[c][i]);
    draft.audit.push_back({static_cast<int>(c), true, i});
  }

  std::size_t n_unseen = 0;
  for (std::size_t k = 0; k < unseen_classes.size(); ++k) {
    const std::size_t cls = unseen_classes[k];
    const std::size_t local = cls - pools.k_seen;
    const std::size_t quota = quotas[k];
    if (quota > pools.n_pool)
      throw ConstructionError("unseen class " + std::to_string(cls) + " quota " +
                              std::to_string(quota) + " exceeds its pool by " +
                              std::to_string(quota - pools.n_pool));
    const auto perm = permutation(pools.n_pool, make_rng(seed, "unseen-perm", {cls}));
    for (std::size_t j = 0; j < quota; ++j) {
      draft.x.push_back(unseen_pool[local][perm[j]]);
      draft.audit.push_back({static_cast<int>(cls), false, perm[j]});
    }
    if (quota > 0) b.counts.unseen_per_class[static_cast<int>(cls)] = quota;
    n_unseen += quota;
  }

  const auto order = permutation(draft.x.size(), make_rng(seed, "unlabeled-order"));
  b.unlabeled.reserve(order.size());
  b.audit.reserve(order.size());
  for (std::size_t k : order) {
    b.unlabeled.push_back(std::move(draft.x[k]));
    b.audit.push_back(draft.audit[k]);
  }

  b.counts.n_labeled = b.labeled.size();
  b.counts.n_unlabeled_seen = n_seen_u;
  b.counts.n_unlabeled_unseen = n_unseen;
  return b;
}

void write_record(std::ostream& out, std::string_view split, int origin, bool seen,
                  const Features& x) {
  out << "{\"split\":\"" << split << "\",\"origin_class\":" << origin
      << ",\"seen\":" << (seen ? "true" : "false") << ",\"x\":[";
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j) out << ',';
    out << csv::format_shortest(x[j]);
  }
  out << "]}\n";
}

}  // namespace

double round_half_even(double v) noexcept {
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(v);
  std::fesetround(old);
  return r;
}

void MixtureSpec::validate() const {
  if (d < 1) throw ConfigError("mixture: d must be >= 1");
  if (k_seen < 2) throw ConfigError("mixture: k_seen must be >= 2");
  if (k_unseen < 1) throw ConfigError("mixture: k_unseen must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("mixture: sigma must be > 0");
  if (class_means.size() != k_seen + k_unseen)
    throw ConfigError("mixture: expected " + std::to_string(k_seen + k_unseen) + " class means");
  for (const auto& m : class_means) {
    if (m.size() != d) throw ConfigError("mixture: class mean has wrong dimension");
  }
  if (!far_offset.empty() && far_offset.size() != d)
    throw ConfigError("mixture: far_offset has wrong dimension");
  if (n_pool < 1) throw ConfigError("mixture: n_pool must be >= 1");
  if (n_labeled > k_seen * n_pool) throw ConfigError("mixture: n_labeled exceeds k_seen * n_pool");
  if (n_labeled == 0 || n_labeled % k_seen != 0)
    throw ConfigError("mixture: n_labeled must be a positive multiple of k_seen");
}

std::vector<Features> random_class_means(std::size_t d, std::size_t count, double low, double high,
                                         std::uint64_t seed) {
  Rng rng = make_rng(seed, "class-means");
  std::uniform_real_distribution<double> u(low, high);
  std::vector<Features> means(count, Features(d));
  for (auto& m : means)
    for (auto& v : m) v = u(rng);
  return means;
}

Features default_far_offset(const MixtureSpec& mix) {
  double max_dist = 0.0;
  for (std::size_t a = 0; a < mix.k_seen; ++a)
    for (std::size_t b = a + 1; b < mix.k_seen; ++b)
      max_dist = std::max(max_dist, distance(mix.class_means[a], mix.class_means[b]));
  const double step = 10.0 * max_dist / std::sqrt(static_cast<double>(mix.d));
  return Features(mix.d, step);
}

Pools sample_pools(const MixtureSpec& mix, std::uint64_t seed) {
  mix.validate();
  const Features offset = mix.far_offset.empty() ? default_far_offset(mix) : mix.far_offset;

  Pools p;
  p.d = mix.d;
  p.k_seen = mix.k_seen;
  p.k_unseen = mix.k_unseen;
  p.n_pool = mix.n_pool;
  p.seen.resize(mix.k_seen);
  p.unseen_near.resize(mix.k_unseen);
  p.unseen_far.resize(mix.k_unseen);

  for (std::size_t c = 0; c < mix.k_seen + mix.k_unseen; ++c) {
    Rng rng = make_rng(seed, "pool", {c});
    auto& dst = c < mix.k_seen ? p.seen[c] : p.unseen_near[c - mix.k_seen];
    dst.reserve(mix.n_pool);
    for (std::size_t i = 0; i < mix.n_pool; ++i)
      dst.push_back(draw_gaussian(mix.class_means[c], mix.sigma, rng));
  }
  for (std::size_t u = 0; u < mix.k_unseen; ++u) {
    p.unseen_far[u] = p.unseen_near[u];
    for (auto& x : p.unseen_far[u])
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += offset[j];
  }
  for (std::size_t c = 0; c < mix.k_seen; ++c) {
    Rng rng = make_rng(seed, "test", {c});
    for (std::size_t i = 0; i < mix.n_test_per_class; ++i)
      p.test.push_back({draw_gaussian(mix.class_means[c], mix.sigma, rng), static_cast<int>(c)});
  }
  return p;
}

std::vector<std::size_t> imbalance_counts(double c_ib, std::size_t k_u, std::size_t n_max) {
  if (!(c_ib > 0.0 && c_ib <= 1.0)) throw ConfigError("C_ib must lie in (0, 1]");
  if (k_u < 1 || n_max < 1) throw ConfigError("imbalance_counts needs k_u >= 1 and n_max >= 1");
  if (k_u == 1) return {n_max};
  std::vector<std::size_t> counts(k_u);
  for (std::size_t k = 0; k < k_u; ++k) {
    const double e = static_cast<double>(k) / static_cast<double>(k_u - 1);
    const double v = static_cast<double>(n_max) * std::pow(c_ib, e);
    // Guard against values like 49.999999999 that are integral in exact arithmetic.
    counts[k] = static_cast<std::size_t>(std::floor(v * (1.0 + 1e-12)));
  }
  counts[0] = n_max;
  return counts;
}

std::string_view split_mode_name(SplitMode m) noexcept {
  switch (m) {
    case SplitMode::ressl: return "ressl";
    case SplitMode::legacy: return "legacy";
    case SplitMode::rs_sweep: return "rs_sweep";
  }
  return "?";
}

std::string_view nearness_name(Nearness n) noexcept { return n == Nearness::near ? "near" : "far"; }

std::string_view unseen_budget_name(UnseenBudget b) noexcept {
  return b == UnseenBudget::per_class ? "per_class" : "fixed_total";
}

void SplitSpec::validate(const Pools& pools) const {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(r_s)) throw ConfigError("r_s must lie in [0, 1]");
  if (!in_unit(r_u)) throw ConfigError("r_u must lie in [0, 1]");
  if (!(c_ib > 0.0 && c_ib <= 1.0)) throw ConfigError("C_ib must lie in (0, 1]");
  if (mode == SplitMode::legacy) {
    if (!legacy_total || !legacy_rho) throw ConfigError("legacy mode needs legacy_total and legacy_rho");
    if (!in_unit(*legacy_rho)) throw ConfigError("legacy_rho must lie in [0, 1]");
    return;
  }
  if (legacy_total || legacy_rho) throw ConfigError("legacy fields are only valid in legacy mode");
  if (c_n < 1 || c_n > pools.k_unseen)
    throw ConfigError("C_n must lie in [1, " + std::to_string(pools.k_unseen) + "]");
  if (c_i) {
    if (c_i->size() != c_n) throw ConfigError("|C_i| must equal C_n");
    std::vector<std::size_t> sorted = *c_i;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("C_i contains duplicate class indices");
    for (std::size_t c : sorted) {
      if (c < pools.k_seen || c >= pools.k_seen + pools.k_unseen)
        throw ConfigError("C_i index " + std::to_string(c) + " is not an unseen class");
    }
  }
  if (nearness == Nearness::far && !pools.has_far())
    throw ConfigError("far unseen pool is not available for this data source");
}

std::size_t seen_unlabeled_size(const Pools& pools, double r_s, std::size_t n_labeled) {
  const double remaining = static_cast<double>(pools.seen_total() - n_labeled);
  return static_cast<std::size_t>(round_half_even(r_s * remaining));
}

std::vector<std::size_t> unseen_source_classes(const Pools& pools, const SplitSpec& spec) {
  if (spec.c_i) return *spec.c_i;
  std::vector<std::size_t> out;
  for (std::size_t k = pools.k_unseen - spec.c_n; k < pools.k_unseen; ++k)
    out.push_back(pools.k_seen + k);
  return out;
}

std::vector<std::size_t> unseen_quotas(const Pools& pools, const SplitSpec& spec) {
  const std::size_t c_n = spec.c_n;
  const double n_pool = static_cast<double>(pools.n_pool);
  // Per-class ceiling and total cap, before rounding.
  double per_class = spec.r_u * n_pool;
  double cap = spec.r_u * static_cast<double>(c_n) * n_pool;
  if (spec.unseen_budget == UnseenBudget::fixed_total) {
    cap = spec.r_u * static_cast<double>(pools.k_unseen) * n_pool;
    per_class = cap / static_cast<double>(c_n);
  }
  // Same guard as imbalance_counts, mirrored for ceil.
  const auto n_max = static_cast<std::size_t>(std::ceil(per_class * (1.0 - 1e-12)));
  if (n_max == 0) return std::vector<std::size_t>(c_n, 0);
  auto quotas = imbalance_counts(spec.c_ib, c_n, n_max);
  const auto cap_count = static_cast<std::size_t>(round_half_even(cap));
  std::size_t total = std::accumulate(quotas.begin(), quotas.end(), std::size_t{0});
  // Trim the excess one sample at a time, walking from the last source class
  // backwards.
  while (total > cap_count) {
    for (std::size_t k = c_n; k-- > 0 && total > cap_count;) {
      if (quotas[k] > 0) {
        --quotas[k];
        --total;
      }
    }
  }
  return quotas;
}

DatasetBundle build_ressl(const Pools& pools, const SplitSpec& spec, std::size_t n_labeled) {
  if (spec.mode == SplitMode::legacy) throw ConfigError("build_ressl called with legacy mode");
  spec.validate(pools);
  const SeenSplit split = split_seen(pools, spec.seed, n_labeled);
  const std::size_t n_seen_u = seen_unlabeled_size(pools, spec.r_s, n_labeled);
  const auto classes = unseen_source_classes(pools, spec);
  const auto quotas = unseen_quotas(pools, spec);
  const auto& source = spec.nearness == Nearness::near ? pools.unseen_near : pools.unseen_far;

  DatasetBundle b = assemble(pools, split, n_seen_u, classes, quotas, source, spec.seed);
  b.counts.seen_target_exact = spec.r_s * static_cast<double>(pools.seen_total() - n_labeled);
  b.counts.unseen_target_exact =
      spec.unseen_budget == UnseenBudget::fixed_total
          ? spec.r_u * static_cast<double>(pools.k_unseen * pools.n_pool)
          : spec.r_u * static_cast<double>(spec.c_n * pools.n_pool);
  return b;
}

DatasetBundle build_legacy(const Pools& pools, std::size_t total_u, double rho_unseen,
                           std::uint64_t seed, std::size_t n_labeled) {
  if (!(rho_unseen >= 0.0 && rho_unseen <= 1.0)) throw ConfigError("legacy_rho must lie in [0, 1]");
  const SeenSplit split = split_seen(pools, seed, n_labeled);
  const double unseen_exact = rho_unseen * static_cast<double>(total_u);
  const auto n_unseen = static_cast<std::size_t>(round_half_even(unseen_exact));
  const std::size_t n_seen = total_u - n_unseen;

  // Unseen part spread uniformly over all unseen classes; the first classes
  // take the remainder.
  std::vector<std::size_t> classes;
  std::vector<std::size_t> quotas;
  for (std::size_t k = 0; k < pools.k_unseen; ++k) {
    classes.push_back(pools.k_seen + k);
    quotas.push_back(n_unseen / pools.k_unseen + (k < n_unseen % pools.k_unseen ? 1 : 0));
  }
  DatasetBundle b =
      assemble(pools, split, n_seen, classes, quotas, pools.unseen_near, seed);
  b.counts.seen_target_exact = static_cast<double>(total_u) - unseen_exact;
  b.counts.unseen_target_exact = unseen_exact;
  return b;
}

DatasetBundle build_bundle(const Pools& pools, const SplitSpec& spec, std::size_t n_labeled) {
  if (spec.mode == SplitMode::legacy) {
    spec.validate(pools);
    return build_legacy(pools, *spec.legacy_total, *spec.legacy_rho, spec.seed, n_labeled);
  }
  return build_ressl(pools, spec, n_labeled);
}

void write_pools_jsonl(std::ostream& out, const Pools& pools) {
  for (std::size_t c = 0; c < pools.seen.size(); ++c)
    for (const auto& x : pools.seen[c]) write_record(out, "seen_pool", static_cast<int>(c), true, x);
  for (std::size_t u = 0; u < pools.unseen_near.size(); ++u)
    for (const auto& x : pools.unseen_near[u])
      write_record(out, "unseen_near_pool", static_cast<int>(pools.k_seen + u), false, x);
  for (std::size_t u = 0; u < pools.unseen_far.size(); ++u)
    for (const auto& x : pools.unseen_far[u])
      write_record(out, "unseen_far_pool", static_cast<int>(pools.k_seen + u), false, x);
  for (const auto& s : pools.test) write_record(out, "test", s.label, true, s.x);
}

void write_bundle_jsonl(std::ostream& out, const DatasetBundle& bundle) {
  for (const auto& s : bundle.labeled) write_record(out, "labeled", s.label, true, s.x);
  for (std::size_t i = 0; i < bundle.unlabeled.size(); ++i)
    write_record(out, "unlabeled", bundle.audit[i].origin_class, bundle.audit[i].seen,
                 bundle.unlabeled[i]);
  for (const auto& s : bundle.test) write_record(out, "test", s.label, true, s.x);
}

}  // namespace ressl
