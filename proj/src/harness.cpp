#include "ressl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/rng.hpp"

namespace ressl {

namespace {

constexpr std::size_t kDefaultLegacyTotal = 2000;

bool has_base(Factor f) {
  return f == Factor::c_n || f == Factor::c_i || f == Factor::c_ib || f == Factor::nearness;
}

SplitSpec ressl_base(const ExperimentSpec& spec) {
  SplitSpec s = spec.fixed;
  if (s.mode == SplitMode::legacy) s.mode = SplitMode::ressl;
  s.legacy_total.reset();
  s.legacy_rho.reset();
  return s;
}

[[noreturn]] void rethrow_as(ExitCode code, const std::string& what) {
  switch (code) {
    case ExitCode::config: throw ConfigError(what);
    case ExitCode::construction: throw ConstructionError(what);
    case ExitCode::numeric: throw NumericError(what);
    case ExitCode::io: throw IoError(what);
    case ExitCode::ok: break;
  }
  throw Error(code, what);
}

struct Cell {
  std::size_t algorithm = 0;
  std::size_t condition = 0;
  std::size_t point = 0;  // == grid.size() for the base reference
  std::size_t seed = 0;
};

struct CellOutcome {
  double accuracy = 0.0;
  bool done = false;
  std::optional<ExitCode> code;
  std::string message;
  std::exception_ptr other;
};

}  // namespace

SplitSpec split_for_value(const ExperimentSpec& spec, double value, std::optional<Nearness> condition) {
  SplitSpec s = ressl_base(spec);
  switch (spec.factor) {
    case Factor::r:
      s.r_u = value;
      break;
    case Factor::r_s:
      s.mode = SplitMode::rs_sweep;
      s.r_s = value;
      break;
    case Factor::c_n:
      s.c_n = static_cast<std::size_t>(value);
      s.c_i.reset();
      break;
    case Factor::c_i:
    case Factor::nearness:
      s.c_n = 1;
      s.c_i = std::vector<std::size_t>{static_cast<std::size_t>(value)};
      break;
    case Factor::c_ib:
      s.c_ib = value;
      break;
    case Factor::legacy_rho:
      s.mode = SplitMode::legacy;
      s.legacy_total = spec.fixed.legacy_total.value_or(kDefaultLegacyTotal);
      s.legacy_rho = value;
      break;
  }
  if (condition) s.nearness = *condition;
  return s;
}

SplitSpec split_for_base(const ExperimentSpec& spec) {
  SplitSpec s = ressl_base(spec);
  s.r_u = 0.0;
  s.nearness = Nearness::near;
  return s;
}

std::uint64_t pool_seed(std::uint64_t master, std::uint64_t seed) noexcept {
  return derive_seed(master, "pools", {seed});
}
std::uint64_t split_seed(std::uint64_t master, std::uint64_t seed) noexcept {
  return derive_seed(master, "split", {seed});
}
std::uint64_t train_seed(std::uint64_t master, std::uint64_t seed) noexcept {
  return derive_seed(master, "train", {seed});
}

Pools make_pools(const ExperimentSpec& spec, std::uint64_t seed) {
  const std::uint64_t ps = pool_seed(spec.master_seed, seed);
  if (const auto* m = std::get_if<MixtureSpec>(&spec.data)) return sample_pools(*m, ps);
  return load_tabular_pools(std::get<TabularConfig>(spec.data).source, ps);
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--threads must be at least 1");
    return *flag;
  }
  if (const char* env = std::getenv("RESSL_THREADS"); env != nullptr && *env != '\0') {
    const auto v = csv::parse_int(env);
    if (!v || *v < 1) throw ConfigError(std::string("RESSL_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(*v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

CurveSet run_sweep(const ExperimentSpec& spec, const RunOptions& opts) {
  spec.validate();
  const std::size_t n_alg = spec.algorithms.size();
  const std::size_t n_grid = spec.grid.size();
  const std::size_t n_seed = spec.seeds.size();
  const bool base = has_base(spec.factor);
  std::vector<std::optional<Nearness>> conditions{std::nullopt};
  if (spec.factor == Factor::nearness) conditions = {Nearness::near, Nearness::far};
  const std::size_t n_cond = conditions.size();

  std::vector<Pools> pools;
  pools.reserve(n_seed);
  for (std::uint64_t s : spec.seeds) pools.push_back(make_pools(spec, s));

  // Canonical cell order: algorithm, condition, point (base last), seed.
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < n_alg; ++a)
    for (std::size_t c = 0; c < n_cond; ++c)
      for (std::size_t p = 0; p < n_grid + ((base && c == 0) ? 1 : 0); ++p)
        for (std::size_t s = 0; s < n_seed; ++s) cells.push_back({a, c, p, s});

  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opts.shuffle_order) {
    Rng rng = make_rng(*opts.shuffle_order, "cell-order");
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<CellOutcome> outcomes(cells.size());
  auto describe = [&](const Cell& cell) {
    std::string value = cell.point == n_grid ? std::string("base") : csv::format_shortest(spec.grid[cell.point]);
    std::string out = "cell algorithm=" + std::string(algorithm_name(spec.algorithms[cell.algorithm])) +
                      " factor=" + std::string(factor_name(spec.factor)) + " value=" + value;
    if (conditions[cell.condition])
      out += " condition=" + std::string(nearness_name(*conditions[cell.condition]));
    out += " seed=" + std::to_string(spec.seeds[cell.seed]);
    return out;
  };
  auto run_cell = [&](std::size_t id) {
    const Cell& cell = cells[id];
    CellOutcome& out = outcomes[id];
    try {
      const std::uint64_t seed = spec.seeds[cell.seed];
      SplitSpec split = cell.point == n_grid
                            ? split_for_base(spec)
                            : split_for_value(spec, spec.grid[cell.point], conditions[cell.condition]);
      split.seed = split_seed(spec.master_seed, seed);
      const DatasetBundle bundle = build_bundle(pools[cell.seed], split, spec.n_labeled());
      const TrainResult result = train(spec.algorithms[cell.algorithm], bundle, spec.train,
                                       train_seed(spec.master_seed, seed));
      out.accuracy = result.test_accuracy;
      out.done = true;
    } catch (const Error& e) {
      out.code = e.code();
      out.message = e.what();
    } catch (...) {
      out.other = std::current_exception();
    }
  };

  const std::size_t threads = std::min(std::max<std::size_t>(1, opts.threads), cells.size());
  if (threads <= 1) {
    for (std::size_t id : order) run_cell(id);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < order.size(); i = next.fetch_add(1)) run_cell(order[i]);
      });
    }
    for (auto& w : workers) w.join();
  }

  for (std::size_t id = 0; id < cells.size(); ++id) {
    const CellOutcome& out = outcomes[id];
    if (out.done) continue;
    if (out.other) std::rethrow_exception(out.other);
    rethrow_as(*out.code, describe(cells[id]) + ": " + out.message);
  }

  auto accuracy_at = [&](std::size_t a, std::size_t c, std::size_t p, std::size_t s) {
    // Cells are laid out in canonical order.
    std::size_t id = 0;
    for (std::size_t aa = 0; aa < a; ++aa) id += n_grid * n_cond * n_seed + (base ? n_seed : 0);
    for (std::size_t cc = 0; cc < c; ++cc) id += (n_grid + ((base && cc == 0) ? 1 : 0)) * n_seed;
    id += p * n_seed + s;
    return outcomes[id].accuracy;
  };

  CurveSet set;
  std::vector<double> xs(spec.grid.begin(), spec.grid.end());
  for (std::size_t a = 0; a < n_alg; ++a) {
    std::optional<CurvePoint> base_point;
    if (base) {
      CurvePoint bp;
      bp.x = 0.0;
      for (std::size_t s = 0; s < n_seed; ++s) bp.acc_per_seed.push_back(accuracy_at(a, 0, n_grid, s));
      bp.acc_mean = std::accumulate(bp.acc_per_seed.begin(), bp.acc_per_seed.end(), 0.0) /
                    static_cast<double>(n_seed);
      base_point = bp;
    }
    for (std::size_t c = 0; c < n_cond; ++c) {
      std::vector<std::vector<double>> per_seed(n_grid);
      for (std::size_t p = 0; p < n_grid; ++p)
        for (std::size_t s = 0; s < n_seed; ++s) per_seed[p].push_back(accuracy_at(a, c, p, s));
      std::string label(factor_name(spec.factor));
      if (conditions[c]) label += ":" + std::string(nearness_name(*conditions[c]));
      set.entries.push_back(CurveEntry{std::string(algorithm_name(spec.algorithms[a])), label,
                                       spec.factor, spec.seeds, base_point,
                                       AccuracyCurve::from_seeds(spec.factor, xs, std::move(per_seed))});
    }
  }
  set.spec = spec_to_json(spec);
  set.content_hash = [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(curves_csv(set))));
    return std::string(buf);
  }();
  return set;
}

}  // namespace ressl
