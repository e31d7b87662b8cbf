#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "ressl/defaults.hpp"
#include "ressl/error.hpp"
#include "ressl/harness.hpp"

namespace ressl {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown key '" + k + "' in " + std::string(where));
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

MixtureSpec mixture_from_json(const json& j) {
  reject_unknown(j, "mixture",
                 {"d", "k_seen", "k_unseen", "class_means", "mean_seed", "mean_low", "mean_high",
                  "sigma", "far_offset", "n_pool", "n_labeled", "n_test_per_class"});
  MixtureSpec m;
  m.d = get_or(j, "d", m.d);
  m.k_seen = get_or(j, "k_seen", m.k_seen);
  m.k_unseen = get_or(j, "k_unseen", m.k_unseen);
  m.sigma = get_or(j, "sigma", m.sigma);
  m.n_pool = get_or(j, "n_pool", m.n_pool);
  m.n_labeled = get_or(j, "n_labeled", m.n_labeled);
  m.n_test_per_class = get_or(j, "n_test_per_class", m.n_test_per_class);
  m.far_offset = get_or(j, "far_offset", Features{});
  if (j.contains("class_means")) {
    if (j.contains("mean_seed") || j.contains("mean_low") || j.contains("mean_high"))
      throw ConfigError("mixture: give either class_means or mean_seed/mean_low/mean_high");
    m.class_means = get_or(j, "class_means", std::vector<Features>{});
  } else {
    m.class_means = random_class_means(m.d, m.k_seen + m.k_unseen,
                                       get_or(j, "mean_low", defaults::kMeanLow),
                                       get_or(j, "mean_high", defaults::kMeanHigh),
                                       get_or(j, "mean_seed", std::uint64_t{0}));
  }
  m.validate();
  return m;
}

json mixture_to_json(const MixtureSpec& m) {
  json j{{"d", m.d},           {"k_seen", m.k_seen},       {"k_unseen", m.k_unseen},
         {"sigma", m.sigma},   {"class_means", m.class_means}, {"n_pool", m.n_pool},
         {"n_labeled", m.n_labeled}, {"n_test_per_class", m.n_test_per_class}};
  if (!m.far_offset.empty()) j["far_offset"] = m.far_offset;
  return j;
}

TabularConfig tabular_from_json(const json& j) {
  reject_unknown(j, "tabular",
                 {"path", "label_column", "seen_labels", "unseen_labels", "n_pool", "n_labeled",
                  "n_test_per_class"});
  TabularConfig t;
  t.source.path = get_or(j, "path", std::string{});
  t.source.label_column = get_or(j, "label_column", std::string{});
  t.source.seen_labels = get_or(j, "seen_labels", std::vector<std::string>{});
  t.source.unseen_labels = get_or(j, "unseen_labels", std::vector<std::string>{});
  t.source.n_pool = get_or(j, "n_pool", std::size_t{0});
  t.source.n_test_per_class = get_or(j, "n_test_per_class", std::size_t{0});
  t.n_labeled = get_or(j, "n_labeled", std::size_t{0});
  if (t.source.path.empty() || t.source.label_column.empty())
    throw ConfigError("tabular: path and label_column are required");
  return t;
}

json tabular_to_json(const TabularConfig& t) {
  return {{"path", t.source.path},
          {"label_column", t.source.label_column},
          {"seen_labels", t.source.seen_labels},
          {"unseen_labels", t.source.unseen_labels},
          {"n_pool", t.source.n_pool},
          {"n_labeled", t.n_labeled},
          {"n_test_per_class", t.source.n_test_per_class}};
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(j, "train",
                 {"hidden", "epochs", "batch_size", "unlabeled_batch_size", "lr", "momentum",
                  "lambda_max", "rampup_epochs", "tau", "noise_weak", "noise_strong", "mixup_alpha",
                  "ema_decay"});
  TrainConfig c;
  c.hidden = get_or(j, "hidden", c.hidden);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.unlabeled_batch_size = get_or(j, "unlabeled_batch_size", c.unlabeled_batch_size);
  c.lr = get_or(j, "lr", c.lr);
  c.momentum = get_or(j, "momentum", c.momentum);
  c.lambda_max = get_or(j, "lambda_max", c.lambda_max);
  c.rampup_epochs = get_or(j, "rampup_epochs", c.rampup_epochs);
  c.tau = get_or(j, "tau", c.tau);
  c.noise_weak = get_or(j, "noise_weak", c.noise_weak);
  c.noise_strong = get_or(j, "noise_strong", c.noise_strong);
  c.mixup_alpha = get_or(j, "mixup_alpha", c.mixup_alpha);
  c.ema_decay = get_or(j, "ema_decay", c.ema_decay);
  c.validate();
  return c;
}

json train_to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"unlabeled_batch_size", c.unlabeled_batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"lambda_max", c.lambda_max},
          {"rampup_epochs", c.rampup_epochs},
          {"tau", c.tau},
          {"noise_weak", c.noise_weak},
          {"noise_strong", c.noise_strong},
          {"mixup_alpha", c.mixup_alpha},
          {"ema_decay", c.ema_decay}};
}

SplitSpec fixed_from_json(const json& j, std::size_t k_unseen) {
  reject_unknown(j, "fixed",
                 {"mode", "r_s", "r_u", "c_n", "c_i", "nearness", "c_ib", "legacy_total",
                  "legacy_rho", "unseen_budget"});
  SplitSpec s;
  s.r_u = 0.2;
  s.c_n = k_unseen;
  s.legacy_total = std::nullopt;
  const std::string mode = get_or(j, "mode", std::string("ressl"));
  if (mode == "ressl") s.mode = SplitMode::ressl;
  else if (mode == "legacy") s.mode = SplitMode::legacy;
  else if (mode == "rs_sweep") s.mode = SplitMode::rs_sweep;
  else throw ConfigError("fixed.mode: unknown mode '" + mode + "'");
  s.r_s = get_or(j, "r_s", s.r_s);
  s.r_u = get_or(j, "r_u", s.r_u);
  s.c_n = get_or(j, "c_n", s.c_n);
  if (j.contains("c_i") && !j.at("c_i").is_null())
    s.c_i = get_or(j, "c_i", std::vector<std::size_t>{});
  const std::string near = get_or(j, "nearness", std::string("near"));
  if (near == "near") s.nearness = Nearness::near;
  else if (near == "far") s.nearness = Nearness::far;
  else throw ConfigError("fixed.nearness must be 'near' or 'far'");
  s.c_ib = get_or(j, "c_ib", s.c_ib);
  if (j.contains("legacy_total")) s.legacy_total = get_or(j, "legacy_total", std::size_t{0});
  if (j.contains("legacy_rho")) s.legacy_rho = get_or(j, "legacy_rho", 0.0);
  const std::string budget = get_or(j, "unseen_budget", std::string("per_class"));
  if (budget == "per_class") s.unseen_budget = UnseenBudget::per_class;
  else if (budget == "fixed_total") s.unseen_budget = UnseenBudget::fixed_total;
  else throw ConfigError("fixed.unseen_budget must be 'per_class' or 'fixed_total'");
  return s;
}

json fixed_to_json(const SplitSpec& s) {
  json j{{"mode", std::string(split_mode_name(s.mode))},
         {"r_s", s.r_s},
         {"r_u", s.r_u},
         {"c_n", s.c_n},
         {"nearness", std::string(nearness_name(s.nearness))},
         {"c_ib", s.c_ib},
         {"unseen_budget", std::string(unseen_budget_name(s.unseen_budget))}};
  j["c_i"] = s.c_i ? json(*s.c_i) : json(nullptr);
  if (s.legacy_total) j["legacy_total"] = *s.legacy_total;
  if (s.legacy_rho) j["legacy_rho"] = *s.legacy_rho;
  return j;
}

std::size_t unseen_count(const ExperimentSpec& spec) {
  if (const auto* m = std::get_if<MixtureSpec>(&spec.data)) return m->k_unseen;
  return std::get<TabularConfig>(spec.data).source.unseen_labels.size();
}

std::size_t seen_count(const ExperimentSpec& spec) {
  if (const auto* m = std::get_if<MixtureSpec>(&spec.data)) return m->k_seen;
  return std::get<TabularConfig>(spec.data).source.seen_labels.size();
}

bool is_integral(double v) { return std::floor(v) == v; }

}  // namespace

std::size_t ExperimentSpec::n_labeled() const {
  if (const auto* m = std::get_if<MixtureSpec>(&data)) return m->n_labeled;
  return std::get<TabularConfig>(data).n_labeled;
}

std::vector<double> default_grid(Factor factor, std::size_t k_seen, std::size_t k_unseen) {
  switch (factor) {
    case Factor::r: return {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};
    case Factor::r_s: return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    case Factor::c_ib: return {0.01, 0.02, 0.05, 0.10, 0.20};
    case Factor::legacy_rho: return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    case Factor::c_n: {
      std::vector<double> g;
      for (std::size_t k = 1; k <= k_unseen; ++k) g.push_back(static_cast<double>(k));
      return g;
    }
    case Factor::c_i:
    case Factor::nearness: {
      std::vector<double> g;
      for (std::size_t k = 0; k < k_unseen; ++k) g.push_back(static_cast<double>(k_seen + k));
      return g;
    }
  }
  return {};
}

void ExperimentSpec::validate() const {
  if (const auto* m = std::get_if<MixtureSpec>(&data)) m->validate();
  if (algorithms.empty()) throw ConfigError("no algorithms selected");
  if (grid.empty()) throw ConfigError("grid must not be empty");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  train.validate();
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("grid must be strictly increasing");
  }
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds must be distinct");
  const std::size_t k_s = seen_count(*this);
  const std::size_t k_u = unseen_count(*this);
  for (double v : grid) {
    switch (factor) {
      case Factor::r:
      case Factor::r_s:
      case Factor::legacy_rho:
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("grid values must lie in [0, 1]");
        break;
      case Factor::c_ib:
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError("C_ib grid values must lie in (0, 1]");
        break;
      case Factor::c_n:
        if (!is_integral(v) || v < 1.0 || v > static_cast<double>(k_u))
          throw ConfigError("C_n grid values must be integers in [1, k_unseen]");
        break;
      case Factor::c_i:
      case Factor::nearness:
        if (!is_integral(v) || v < static_cast<double>(k_s) || v >= static_cast<double>(k_s + k_u))
          throw ConfigError("C_i grid values must be unseen class indices");
        break;
    }
  }
  if (factor == Factor::nearness && std::holds_alternative<TabularConfig>(data))
    throw ConfigError("nearness sweeps need a far pool, which tabular data does not provide");
}

ExperimentSpec default_experiment() {
  ExperimentSpec spec;
  MixtureSpec m;
  m.class_means = random_class_means(m.d, m.k_seen + m.k_unseen, defaults::kMeanLow,
                                     defaults::kMeanHigh, 0);
  spec.data = m;
  spec.algorithms.assign(std::begin(kAllAlgorithms), std::end(kAllAlgorithms));
  spec.factor = Factor::r;
  spec.grid = default_grid(Factor::r, m.k_seen, m.k_unseen);
  spec.fixed.r_s = 1.0;
  spec.fixed.r_u = 0.2;
  spec.fixed.c_n = m.k_unseen;
  spec.thresholds = {defaults::kDeltaGlobal, defaults::kDeltaWorst, defaults::kDeltaBest};
  return spec;
}

ExperimentSpec spec_from_json(const json& j) {
  reject_unknown(j, "experiment spec",
                 {"mixture", "tabular", "algorithms", "factor", "grid", "fixed", "seeds",
                  "master_seed", "train", "thresholds", "output_dir"});
  ExperimentSpec spec;
  if (j.contains("mixture") == j.contains("tabular"))
    throw ConfigError("exactly one of 'mixture' or 'tabular' is required");
  if (j.contains("mixture")) spec.data = mixture_from_json(j.at("mixture"));
  else spec.data = tabular_from_json(j.at("tabular"));

  const auto algos = get_or(j, "algorithms", std::vector<std::string>{});
  if (algos.empty()) {
    spec.algorithms.assign(std::begin(kAllAlgorithms), std::end(kAllAlgorithms));
  } else {
    for (const auto& name : algos) {
      const auto a = parse_algorithm(name);
      if (!a) throw ConfigError("unknown algorithm '" + name + "'");
      spec.algorithms.push_back(*a);
    }
  }
  const std::string factor = get_or(j, "factor", std::string("r"));
  const auto f = parse_factor(factor);
  if (!f) throw ConfigError("unknown factor '" + factor + "'");
  spec.factor = *f;
  spec.grid = get_or(j, "grid", std::vector<double>{});
  if (spec.grid.empty()) spec.grid = default_grid(spec.factor, seen_count(spec), unseen_count(spec));
  spec.fixed = fixed_from_json(j.value("fixed", json::object()), unseen_count(spec));
  spec.seeds = get_or(j, "seeds", spec.seeds);
  spec.master_seed = get_or(j, "master_seed", spec.master_seed);
  spec.train = train_from_json(j.value("train", json::object()));
  const json th = j.value("thresholds", json::object());
  reject_unknown(th, "thresholds", {"delta_g", "delta_w", "delta_b"});
  spec.thresholds.global = get_or(th, "delta_g", defaults::kDeltaGlobal);
  spec.thresholds.worst = get_or(th, "delta_w", defaults::kDeltaWorst);
  spec.thresholds.best = get_or(th, "delta_b", defaults::kDeltaBest);
  spec.output_dir = get_or(j, "output_dir", spec.output_dir);
  spec.validate();
  return spec;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  if (const auto* m = std::get_if<MixtureSpec>(&spec.data)) j["mixture"] = mixture_to_json(*m);
  else j["tabular"] = tabular_to_json(std::get<TabularConfig>(spec.data));
  json algos = json::array();
  for (Algorithm a : spec.algorithms) algos.push_back(std::string(algorithm_name(a)));
  j["algorithms"] = algos;
  j["factor"] = std::string(factor_name(spec.factor));
  j["grid"] = spec.grid;
  j["fixed"] = fixed_to_json(spec.fixed);
  j["seeds"] = spec.seeds;
  j["master_seed"] = spec.master_seed;
  j["train"] = train_to_json(spec.train);
  j["thresholds"] = {{"delta_g", spec.thresholds.global},
                     {"delta_w", spec.thresholds.worst},
                     {"delta_b", spec.thresholds.best}};
  j["output_dir"] = spec.output_dir;
  return j;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

}  // namespace ressl
