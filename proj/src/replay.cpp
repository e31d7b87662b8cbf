#include <fstream>
#include <map>

#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/harness.hpp"

namespace ressl {

std::vector<ReplayRow> replay(std::istream& in, const Thresholds& thresholds) {
  struct Series {
    std::vector<double> xs;
    std::vector<double> ys;
  };
  std::vector<std::string> order;
  std::map<std::string, Series> series;

  std::string line;
  std::size_t lineno = 0;
  while (csv::read_line(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = csv::split(line);
    if (f.size() != 3) throw ParseError(lineno, "expected method,factor_value,accuracy");
    if (f[0] == "method" && f[1] == "factor_value") continue;
    if (f[1] == "base") continue;
    const auto x = csv::parse_double(f[1]);
    const auto y = csv::parse_double(f[2]);
    if (!x) throw ParseError(lineno, "factor value '" + f[1] + "' is not a number");
    if (!y) throw ParseError(lineno, "accuracy '" + f[2] + "' is not a number");
    if (!(*y >= 0.0 && *y <= 1.0)) throw ParseError(lineno, "accuracy must lie in [0, 1]");
    auto [it, fresh] = series.try_emplace(f[0]);
    if (fresh) order.push_back(f[0]);
    if (!it->second.xs.empty() && !(*x > it->second.xs.back()))
      throw ParseError(lineno, "factor values for " + f[0] + " must be strictly increasing");
    it->second.xs.push_back(*x);
    it->second.ys.push_back(*y);
  }

  std::vector<ReplayRow> rows;
  for (const auto& method : order) {
    const auto& s = series.at(method);
    const auto curve = AccuracyCurve::from_means(Factor::r, s.xs, s.ys);
    ReplayRow row{method, {}};
    if (curve.size() < 2) {
      row.report = evaluate_gm_only(curve, thresholds);
      row.report.warnings.push_back("single point; slope metrics need at least 2");
    } else {
      row.report = evaluate_full(curve, thresholds);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ReplayRow> replay_file(const std::string& path, const Thresholds& thresholds) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return replay(in, thresholds);
}

std::string replay_csv(const std::vector<ReplayRow>& rows) {
  std::string out = "method,r_slope,gm,bad,wad,p_ad_ge0\n";
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_fixed(*v) : std::string(); };
  for (const auto& r : rows) {
    out += r.method + "," + opt(r.report.r_slope) + "," + csv::format_fixed(r.report.gm) + "," +
           opt(r.report.bad) + "," + opt(r.report.wad) + "," + opt(r.report.p_ad_nonneg) + "\n";
  }
  return out;
}

}  // namespace ressl
