#include <algorithm>
#include <fstream>
#include <limits>
#include <map>

#include "ressl/csv.hpp"
#include "ressl/datagen.hpp"
#include "ressl/error.hpp"
#include "ressl/rng.hpp"

namespace ressl {

Pools load_tabular_pools(const TabularSource& src, std::uint64_t seed) {
  std::ifstream in(src.path);
  if (!in) throw IoError("cannot open " + src.path);
  if (src.seen_labels.size() < 2) throw ConfigError("tabular: need at least 2 seen labels");
  if (src.unseen_labels.empty()) throw ConfigError("tabular: need at least 1 unseen label");
  if (src.n_pool < 1) throw ConfigError("tabular: n_pool must be >= 1");

  std::string line;
  if (!csv::read_line(in, line)) throw IngestionError(src.path + " is empty");
  const auto header = csv::split(line);
  const auto label_it = std::find(header.begin(), header.end(), src.label_column);
  if (label_it == header.end())
    throw IngestionError("missing label column '" + src.label_column + "'");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t d = header.size() - 1;
  if (d == 0) throw IngestionError("no feature columns");

  std::map<std::string, std::size_t> class_of;
  for (std::size_t i = 0; i < src.seen_labels.size(); ++i) class_of[src.seen_labels[i]] = i;
  for (std::size_t i = 0; i < src.unseen_labels.size(); ++i) {
    if (!class_of.emplace(src.unseen_labels[i], src.seen_labels.size() + i).second)
      throw ConfigError("tabular: label '" + src.unseen_labels[i] + "' listed twice");
  }
  const std::size_t k_total = class_of.size();
  std::vector<std::vector<Features>> rows(k_total);

  for (std::size_t lineno = 2; csv::read_line(in, line); ++lineno) {
    if (line.empty()) continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size())
      throw IngestionError("line " + std::to_string(lineno) + ": expected " +
                           std::to_string(header.size()) + " fields");
    const auto cls = class_of.find(fields[label_col]);
    if (cls == class_of.end()) continue;
    Features x;
    x.reserve(d);
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == label_col) continue;
      const auto v = csv::parse_double(fields[j]);
      if (!v) throw IngestionError("line " + std::to_string(lineno) + ": non-numeric feature '" +
                                   header[j] + "'");
      x.push_back(*v);
    }
    rows[cls->second].push_back(std::move(x));
  }

  Pools p;
  p.d = d;
  p.k_seen = src.seen_labels.size();
  p.k_unseen = src.unseen_labels.size();
  p.n_pool = src.n_pool;
  p.seen.resize(p.k_seen);
  p.unseen_near.resize(p.k_unseen);

  for (const auto& [label, c] : class_of) {
    const bool seen = c < p.k_seen;
    const std::size_t need = src.n_pool + (seen ? src.n_test_per_class : 0);
    auto& r = rows[c];
    if (r.size() < need)
      throw IngestionError("class '" + label + "' has " + std::to_string(r.size()) +
                           " rows, needs " + std::to_string(need));
    std::shuffle(r.begin(), r.end(), make_rng(seed, "tabular", {c}));
    auto& pool = seen ? p.seen[c] : p.unseen_near[c - p.k_seen];
    pool.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(src.n_pool));
    if (seen) {
      for (std::size_t i = src.n_pool; i < need; ++i) p.test.push_back({r[i], static_cast<int>(c)});
    }
  }
  std::stable_sort(p.test.begin(), p.test.end(),
                   [](const LabeledSample& a, const LabeledSample& b) { return a.label < b.label; });

  Features lo(d, std::numeric_limits<double>::infinity());
  Features hi(d, -std::numeric_limits<double>::infinity());
  for (const auto& cls : p.seen)
    for (const auto& x : cls)
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], x[j]);
        hi[j] = std::max(hi[j], x[j]);
      }
  const auto scale = [&](Features& x) {
    for (std::size_t j = 0; j < d; ++j) {
      const double span = hi[j] - lo[j];
      x[j] = span > 0.0 ? (x[j] - lo[j]) / span : 0.0;
    }
  };
  for (auto& cls : p.seen)
    for (auto& x : cls) scale(x);
  for (auto& cls : p.unseen_near)
    for (auto& x : cls) scale(x);
  for (auto& s : p.test) scale(s.x);
  return p;
}

}  // namespace ressl
