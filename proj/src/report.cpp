#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ressl/csv.hpp"
#include "ressl/defaults.hpp"
#include "ressl/error.hpp"
#include "ressl/harness.hpp"
#include "ressl/rng.hpp"

namespace ressl {

using nlohmann::json;

namespace {

std::string hash_hex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

RobustnessReport score_one(const AccuracyCurve& curve, const Thresholds& t) {
  if (!is_ordered(curve.factor())) return evaluate_gm_only(curve, t);
  if (curve.size() < 2) {
    RobustnessReport rep = evaluate_gm_only(curve, t);
    rep.warnings.push_back("curve has " + std::to_string(curve.size()) +
                           " point(s); slope metrics need at least 2");
    return rep;
  }
  return evaluate_full(curve, t);
}

std::string opt_fixed(const std::optional<double>& v) { return v ? csv::format_fixed(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

bool is_nearness_label(const std::string& label) { return label.rfind("nearness", 0) == 0; }

Factor factor_from_label(const std::string& label, std::size_t line) {
  const auto colon = label.find(':');
  const auto f = parse_factor(std::string_view(label).substr(0, colon));
  if (!f) throw ParseError(line, "unknown factor '" + label + "'");
  if (colon != std::string::npos) {
    const std::string cond = label.substr(colon + 1);
    if (*f != Factor::nearness || (cond != "near" && cond != "far"))
      throw ParseError(line, "unknown factor label '" + label + "'");
  }
  return *f;
}

std::string md_header(const std::vector<std::string>& cols) {
  std::string out = "|";
  for (const auto& c : cols) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) out += i == 0 ? "---|" : "---:|";
  return out + "\n";
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + (c.empty() ? std::string("-") : c) + " |";
  return out + "\n";
}

}  // namespace

std::vector<ScoredCurve> score_curves(const CurveSet& curves, const Thresholds& thresholds) {
  std::vector<ScoredCurve> out;
  out.reserve(curves.entries.size());
  for (const auto& e : curves.entries) {
    ScoredCurve sc{e.algorithm, e.label, e.factor, score_one(e.curve, thresholds), {}};
    const auto pts = e.curve.points();
    const std::size_t n_seed = pts.empty() ? 0 : pts.front().acc_per_seed.size();
    const auto xs = e.curve.xs();
    for (std::size_t s = 0; s < n_seed; ++s) {
      std::vector<double> ys;
      for (const auto& p : pts) ys.push_back(p.acc_per_seed.at(s));
      sc.per_seed.push_back(score_one(AccuracyCurve::from_means(e.factor, xs, ys), thresholds));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::string curves_csv(const CurveSet& curves) {
  std::string out = "algorithm,factor,value,seed,accuracy\n";
  auto emit_point = [&](const CurveEntry& e, const CurvePoint& p, const std::string& value) {
    for (std::size_t s = 0; s < p.acc_per_seed.size(); ++s) {
      out += e.algorithm + "," + e.label + "," + value + "," + std::to_string(e.seeds.at(s)) + "," +
             csv::format_shortest(p.acc_per_seed[s]) + "\n";
    }
    out += e.algorithm + "," + e.label + "," + value + ",mean," + csv::format_shortest(p.acc_mean) + "\n";
  };
  for (const auto& e : curves.entries) {
    if (e.base) emit_point(e, *e.base, "base");
    for (const auto& p : e.curve.points()) emit_point(e, p, csv::format_shortest(p.x));
  }
  return out;
}

CurveSet read_curves_csv(std::istream& in) {
  struct Point {
    std::vector<double> per_seed;
    std::optional<double> mean;
    std::size_t mean_line = 0;
  };
  struct Pending {
    std::string algorithm;
    std::string label;
    Factor factor = Factor::r;
    std::vector<std::uint64_t> seeds;
    std::map<double, Point> points;
    std::optional<Point> base;
  };
  std::vector<Pending> pending;
  std::map<std::pair<std::string, std::string>, std::size_t> index;

  std::string line;
  std::size_t lineno = 0;
  if (!csv::read_line(in, line)) throw ParseError(1, "empty curves file");
  ++lineno;
  if (line != "algorithm,factor,value,seed,accuracy")
    throw ParseError(1, "expected header algorithm,factor,value,seed,accuracy");
  while (csv::read_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5) throw ParseError(lineno, "expected 5 fields, got " + std::to_string(f.size()));
    const auto key = std::make_pair(f[0], f[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, pending.size()).first;
      pending.push_back({f[0], f[1], factor_from_label(f[1], lineno), {}, {}, std::nullopt});
    }
    Pending& p = pending[it->second];
    const auto acc = csv::parse_double(f[4]);
    if (!acc) throw ParseError(lineno, "accuracy '" + f[4] + "' is not a number");
    Point* pt = nullptr;
    if (f[2] == "base") {
      if (!p.base) p.base = Point{};
      pt = &*p.base;
    } else {
      const auto x = csv::parse_double(f[2]);
      if (!x) throw ParseError(lineno, "value '" + f[2] + "' is not a number");
      pt = &p.points[*x];
    }
    if (f[3] == "mean") {
      if (pt->mean) throw ParseError(lineno, "duplicate mean row");
      pt->mean = *acc;
      pt->mean_line = lineno;
      continue;
    }
    const auto seed = csv::parse_int(f[3]);
    if (!seed || *seed < 0) throw ParseError(lineno, "seed '" + f[3] + "' is not a non-negative integer");
    const std::size_t slot = pt->per_seed.size();
    if (slot == p.seeds.size()) {
      p.seeds.push_back(static_cast<std::uint64_t>(*seed));
    } else if (slot > p.seeds.size() || p.seeds[slot] != static_cast<std::uint64_t>(*seed)) {
      throw ParseError(lineno, "seed rows are not in a consistent order");
    }
    pt->per_seed.push_back(*acc);
  }

  auto finish = [&](const Pending& p, const Point& pt, double x) {
    CurvePoint cp;
    cp.x = x;
    if (!pt.per_seed.empty()) {
      if (pt.per_seed.size() != p.seeds.size())
        throw ParseError(pt.mean_line, "point has " + std::to_string(pt.per_seed.size()) + " seeds, expected " +
                                           std::to_string(p.seeds.size()));
      cp.acc_per_seed = pt.per_seed;
      cp.acc_mean = std::accumulate(pt.per_seed.begin(), pt.per_seed.end(), 0.0) /
                    static_cast<double>(pt.per_seed.size());
      if (pt.mean && std::abs(*pt.mean - cp.acc_mean) > 1e-12)
        throw ParseError(pt.mean_line, "mean row disagrees with the per-seed rows");
    } else {
      if (!pt.mean) throw ParseError(lineno, "point without accuracies");
      cp.acc_mean = *pt.mean;
    }
    return cp;
  };

  CurveSet set;
  for (const auto& p : pending) {
    if (p.points.empty()) throw ParseError(lineno, "curve " + p.algorithm + "/" + p.label + " has no points");
    std::vector<CurvePoint> pts;
    for (const auto& [x, pt] : p.points) pts.push_back(finish(p, pt, x));
    std::optional<CurvePoint> base;
    if (p.base) base = finish(p, *p.base, 0.0);
    try {
      set.entries.push_back(CurveEntry{p.algorithm, p.label, p.factor, p.seeds, base,
                                       AccuracyCurve(p.factor, std::move(pts))});
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  set.content_hash = hash_hex(curves_csv(set));
  return set;
}

CurveSet merge_curves(std::vector<CurveSet> sets) {
  CurveSet out;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& s : sets) {
    for (auto& e : s.entries) {
      if (!seen.emplace(e.algorithm, e.label).second)
        throw ConfigError("duplicate curve " + e.algorithm + "/" + e.label + " across inputs");
      out.entries.push_back(std::move(e));
    }
  }
  if (sets.size() == 1) out.spec = sets.front().spec;
  out.content_hash = hash_hex(curves_csv(out));
  return out;
}

std::string metrics_csv(const std::vector<ScoredCurve>& scored) {
  std::string out =
      "algorithm,factor,r_slope,gm,bad,wad,p_ad_ge0,global_robust,worst_local_robust,best_local_robust\n";
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  for (const auto& s : scored) {
    const auto& r = s.report;
    out += s.algorithm + "," + s.label + "," + opt_fixed(r.r_slope) + "," + csv::format_fixed(r.gm) + "," +
           opt_fixed(r.bad) + "," + opt_fixed(r.wad) + "," + opt_fixed(r.p_ad_nonneg) + ",";
    if (r.flags) {
      out += flag(r.flags->global) + "," + flag(r.flags->worst_local) + "," + flag(r.flags->best_local);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

json report_to_json(const RobustnessReport& r) {
  json j{{"r_slope", opt_json(r.r_slope)},
         {"intercept", opt_json(r.intercept)},
         {"gm", r.gm},
         {"bad", opt_json(r.bad)},
         {"wad", opt_json(r.wad)},
         {"p_ad_ge0", opt_json(r.p_ad_nonneg)},
         {"thresholds",
          {{"delta_g", r.thresholds.global}, {"delta_w", r.thresholds.worst}, {"delta_b", r.thresholds.best}}},
         {"warnings", r.warnings}};
  if (r.flags) {
    j["flags"] = {{"global_robust", r.flags->global},
                  {"worst_local_robust", r.flags->worst_local},
                  {"best_local_robust", r.flags->best_local}};
  } else {
    j["flags"] = nullptr;
  }
  return j;
}

RobustnessReport report_from_json(const json& j) {
  try {
    RobustnessReport r;
    r.r_slope = opt_from(j, "r_slope");
    r.intercept = opt_from(j, "intercept");
    r.gm = j.at("gm").get<double>();
    r.bad = opt_from(j, "bad");
    r.wad = opt_from(j, "wad");
    r.p_ad_nonneg = opt_from(j, "p_ad_ge0");
    const auto& t = j.at("thresholds");
    r.thresholds = {t.at("delta_g").get<double>(), t.at("delta_w").get<double>(), t.at("delta_b").get<double>()};
    r.warnings = j.value("warnings", std::vector<std::string>{});
    if (j.contains("flags") && !j.at("flags").is_null()) {
      const auto& f = j.at("flags");
      r.flags = RobustnessFlags{f.at("global_robust").get<bool>(), f.at("worst_local_robust").get<bool>(),
                                f.at("best_local_robust").get<bool>()};
    }
    return r;
  } catch (const json::exception& e) {
    throw InvalidReportError(e.what());
  }
}

std::optional<GmTable> gm_cross_table(const std::vector<ScoredCurve>& scored) {
  GmTable table;
  std::vector<std::string> labels;
  for (const auto& s : scored) {
    if (is_nearness_label(s.label)) continue;
    table[s.algorithm][s.label] = s.report.gm;
    if (std::find(labels.begin(), labels.end(), s.label) == labels.end()) labels.push_back(s.label);
  }
  std::vector<std::string> common;
  for (const auto& l : labels) {
    if (std::all_of(table.begin(), table.end(), [&](const auto& row) { return row.second.count(l) > 0; }))
      common.push_back(l);
  }
  if (common.size() < 2) return std::nullopt;
  GmTable out;
  for (const auto& [alg, row] : table)
    for (const auto& l : common) out[alg][l] = row.at(l);
  return out;
}

json report_document(const std::vector<ScoredCurve>& scored, const CurveSet& curves,
                     const Thresholds& thresholds) {
  json doc;
  doc["defaults_version"] = std::string(defaults::kDefaultsVersion);
  doc["content_hash"] = curves.content_hash;
  doc["spec"] = curves.spec ? *curves.spec : json(nullptr);
  doc["thresholds"] = {
      {"delta_g", thresholds.global}, {"delta_w", thresholds.worst}, {"delta_b", thresholds.best}};

  json jc = json::array();
  auto point_json = [](const CurvePoint& p) {
    return json{{"x", p.x}, {"mean", p.acc_mean}, {"per_seed", p.acc_per_seed}};
  };
  for (const auto& e : curves.entries) {
    json pts = json::array();
    for (const auto& p : e.curve.points()) pts.push_back(point_json(p));
    jc.push_back({{"algorithm", e.algorithm},
                  {"factor", e.label},
                  {"seeds", e.seeds},
                  {"base", e.base ? point_json(*e.base) : json(nullptr)},
                  {"points", pts}});
  }
  doc["curves"] = jc;

  json jr = json::array();
  for (const auto& s : scored) {
    json per = json::array();
    for (const auto& r : s.per_seed) per.push_back(report_to_json(r));
    jr.push_back({{"algorithm", s.algorithm}, {"factor", s.label}, {"report", report_to_json(s.report)},
                  {"per_seed", per}});
  }
  doc["reports"] = jr;

  if (const auto table = gm_cross_table(scored)) {
    const auto agg = gm_table_aggregate(*table);
    doc["gm_table"] = {{"gm", *table}, {"f_avg", agg.f_avg}, {"a_avg", agg.a_avg}};
  } else {
    doc["gm_table"] = nullptr;
  }

  json near = json::array();
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> by_alg;
  std::vector<std::string> order;
  for (const auto& s : scored) {
    if (s.label != "nearness:near" && s.label != "nearness:far") continue;
    if (!by_alg.count(s.algorithm)) order.push_back(s.algorithm);
    auto& slot = by_alg[s.algorithm];
    (s.label == "nearness:near" ? slot.first : slot.second) = s.report.gm;
  }
  for (const auto& alg : order) {
    const auto& [n, f] = by_alg[alg];
    near.push_back({{"algorithm", alg}, {"near_gm", opt_json(n)}, {"far_gm", opt_json(f)}});
  }
  doc["nearness"] = near;
  return doc;
}

std::string summary_markdown(const std::vector<ScoredCurve>& scored, const CurveSet& curves) {
  std::ostringstream out;
  out << "# Robustness summary\n\n";
  out << "Accuracies are seed means. Metric columns are computed from the means; `base` columns are the "
         "r_u = 0 reference and are not scored.\n";

  std::vector<std::string> labels;
  for (const auto& e : curves.entries)
    if (std::find(labels.begin(), labels.end(), e.label) == labels.end()) labels.push_back(e.label);

  for (const auto& label : labels) {
    const CurveEntry* first = nullptr;
    for (const auto& e : curves.entries)
      if (e.label == label) {
        first = &e;
        break;
      }
    out << "\n## " << label << "\n\n";
    std::vector<std::string> cols{"Method"};
    const bool base = first->base.has_value();
    if (base) cols.push_back("base");
    for (double x : first->curve.xs()) cols.push_back(csv::format_shortest(x));
    for (const char* m : {"R_slope", "GM", "BAD", "WAD", "P_AD>=0"}) cols.push_back(m);
    out << md_header(cols);
    for (const auto& e : curves.entries) {
      if (e.label != label) continue;
      std::vector<std::string> row{e.algorithm};
      if (base) row.push_back(e.base ? csv::format_fixed(e.base->acc_mean) : std::string());
      for (const auto& p : e.curve.points()) row.push_back(csv::format_fixed(p.acc_mean));
      const auto it = std::find_if(scored.begin(), scored.end(), [&](const ScoredCurve& s) {
        return s.algorithm == e.algorithm && s.label == e.label;
      });
      if (it != scored.end()) {
        const auto& r = it->report;
        row.push_back(opt_fixed(r.r_slope));
        row.push_back(csv::format_fixed(r.gm));
        row.push_back(opt_fixed(r.bad));
        row.push_back(opt_fixed(r.wad));
        row.push_back(opt_fixed(r.p_ad_nonneg));
      }
      out << md_row(row);
    }
  }

  if (const auto table = gm_cross_table(scored)) {
    const auto agg = gm_table_aggregate(*table);
    out << "\n## GM across factors\n\n";
    std::vector<std::string> cols{"Method"};
    const auto& factors = table->begin()->second;
    for (const auto& [f, gm] : factors) cols.push_back(f);
    cols.push_back("F_avg");
    out << md_header(cols);
    for (const auto& [alg, row] : *table) {
      std::vector<std::string> cells{alg};
      for (const auto& [f, gm] : row) cells.push_back(csv::format_fixed(gm));
      cells.push_back(csv::format_fixed(agg.f_avg.at(alg)));
      out << md_row(cells);
    }
    std::vector<std::string> cells{"A_avg"};
    for (const auto& [f, gm] : factors) cells.push_back(csv::format_fixed(agg.a_avg.at(f)));
    cells.push_back("");
    out << md_row(cells);
  }

  bool any_near = false;
  for (const auto& s : scored) any_near = any_near || is_nearness_label(s.label);
  if (any_near) {
    out << "\n## Near vs far unseen classes (GM over C_i)\n\n";
    out << md_header({"Method", "near", "far"});
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::string, std::string>> cells;
    for (const auto& s : scored) {
      if (!is_nearness_label(s.label)) continue;
      if (!cells.count(s.algorithm)) order.push_back(s.algorithm);
      auto& c = cells[s.algorithm];
      (s.label == "nearness:near" ? c.first : c.second) = csv::format_fixed(s.report.gm);
    }
    for (const auto& alg : order) out << md_row({alg, cells[alg].first, cells[alg].second});
  }
  return out.str();
}

void emit_report(const std::vector<ScoredCurve>& scored, const CurveSet& curves,
                 const Thresholds& thresholds, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    const auto path = std::filesystem::path(dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
  };
  write("curves.csv", curves_csv(curves));
  write("metrics.csv", metrics_csv(scored));
  write("report.json", report_document(scored, curves, thresholds).dump(2) + "\n");
  write("summary.md", summary_markdown(scored, curves));
}

}  // namespace ressl
