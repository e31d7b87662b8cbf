#include "ressl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ressl/error.hpp"

namespace ressl {

namespace {

constexpr double kMeanTolerance = 1e-12;

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_same_length(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidCurveError("x and y lengths differ");
}

}  // namespace

std::string_view factor_name(Factor f) noexcept {
  switch (f) {
    case Factor::r: return "r";
    case Factor::r_s: return "r_s";
    case Factor::c_n: return "C_n";
    case Factor::c_i: return "C_i";
    case Factor::c_ib: return "C_ib";
    case Factor::nearness: return "nearness";
    case Factor::legacy_rho: return "legacy_rho";
  }
  return "?";
}

std::optional<Factor> parse_factor(std::string_view name) noexcept {
  for (Factor f : {Factor::r, Factor::r_s, Factor::c_n, Factor::c_i, Factor::c_ib,
                   Factor::nearness, Factor::legacy_rho}) {
    if (factor_name(f) == name) return f;
  }
  return std::nullopt;
}

bool is_ordered(Factor f) noexcept { return f != Factor::c_i && f != Factor::nearness; }

AccuracyCurve::AccuracyCurve(Factor factor, std::vector<CurvePoint> points)
    : factor_(factor), points_(std::move(points)) {
  if (points_.empty()) throw InvalidCurveError("curve has no points");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const CurvePoint& p = points_[i];
    if (!std::isfinite(p.x)) throw InvalidCurveError("non-finite factor value");
    if (i > 0 && !(p.x > points_[i - 1].x))
      throw InvalidCurveError("factor values must be strictly increasing");
    if (!(p.acc_mean >= 0.0 && p.acc_mean <= 1.0))
      throw InvalidCurveError("accuracy outside [0,1]");
    for (double a : p.acc_per_seed) {
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidCurveError("per-seed accuracy outside [0,1]");
    }
    if (!p.acc_per_seed.empty() &&
        std::abs(mean_of(p.acc_per_seed) - p.acc_mean) > kMeanTolerance) {
      throw InvalidCurveError("acc_mean does not match the mean of per-seed accuracies");
    }
  }
}

AccuracyCurve AccuracyCurve::from_means(Factor factor, std::span<const double> xs,
                                        std::span<const double> means) {
  require_same_length(xs, means);
  std::vector<CurvePoint> pts;
  pts.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back({xs[i], means[i], {}});
  return AccuracyCurve(factor, std::move(pts));
}

AccuracyCurve AccuracyCurve::from_seeds(Factor factor, std::span<const double> xs,
                                        std::vector<std::vector<double>> per_seed) {
  if (xs.size() != per_seed.size()) throw InvalidCurveError("x and per-seed lengths differ");
  std::vector<CurvePoint> pts;
  pts.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (per_seed[i].empty()) throw InvalidCurveError("point without per-seed accuracies");
    const double m = mean_of(per_seed[i]);
    pts.push_back({xs[i], m, std::move(per_seed[i])});
  }
  return AccuracyCurve(factor, std::move(pts));
}

std::vector<double> AccuracyCurve::xs() const {
  std::vector<double> out;
  out.reserve(points_.size());
  for (const auto& p : points_) out.push_back(p.x);
  return out;
}

std::vector<double> AccuracyCurve::means() const {
  std::vector<double> out;
  out.reserve(points_.size());
  for (const auto& p : points_) out.push_back(p.acc_mean);
  return out;
}

LinearFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs, ys);
  if (xs.size() < 2) throw InvalidCurveError("slope needs at least 2 points");
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    sxx += dx * dx;
    sxy += dx * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidCurveError("slope needs distinct factor values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

double global_magnitude(std::span<const double> ys) {
  if (ys.empty()) throw InvalidCurveError("GM of an empty curve");
  const double m = mean_of(ys);
  double total = 0.0;
  for (double y : ys) total += std::abs(y - m);
  return total;
}

std::vector<double> adjacent_discrepancies(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs, ys);
  if (xs.size() < 2) throw InvalidCurveError("adjacent discrepancy needs at least 2 points");
  std::vector<double> ad;
  ad.reserve(xs.size() - 1);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double dx = xs[i + 1] - xs[i];
    if (!(dx > 0.0)) throw InvalidCurveError("duplicate or decreasing factor value");
    ad.push_back((ys[i + 1] - ys[i]) / dx);
  }
  return ad;
}

double fit_slope(const AccuracyCurve& curve) { return fit_line(curve.xs(), curve.means()).slope; }

double global_magnitude(const AccuracyCurve& curve) { return global_magnitude(curve.means()); }

std::vector<double> adjacent_discrepancies(const AccuracyCurve& curve) {
  return adjacent_discrepancies(curve.xs(), curve.means());
}

double wad(const AccuracyCurve& curve) {
  const auto ad = adjacent_discrepancies(curve);
  return *std::min_element(ad.begin(), ad.end());
}

double bad(const AccuracyCurve& curve) {
  const auto ad = adjacent_discrepancies(curve);
  return *std::max_element(ad.begin(), ad.end());
}

double p_ad_nonneg(const AccuracyCurve& curve) {
  const auto ad = adjacent_discrepancies(curve);
  const auto nonneg = std::count_if(ad.begin(), ad.end(), [](double d) { return d >= 0.0; });
  return static_cast<double>(nonneg) / static_cast<double>(ad.size());
}

RobustnessFlags robustness_flags(double r_slope, double wad_value, double bad_value,
                                 const Thresholds& t) {
  for (double v : {r_slope, wad_value, bad_value, t.global, t.worst, t.best}) {
    if (std::isnan(v)) throw InvalidReportError("NaN metric or threshold");
  }
  return {r_slope >= t.global, wad_value <= t.worst, bad_value >= t.best};
}

RobustnessReport evaluate_full(const AccuracyCurve& curve, const Thresholds& t) {
  const auto xs = curve.xs();
  const auto ys = curve.means();
  const auto fit = fit_line(xs, ys);
  const auto ad = adjacent_discrepancies(xs, ys);

  RobustnessReport rep;
  rep.thresholds = t;
  rep.r_slope = fit.slope;
  rep.intercept = fit.intercept;
  rep.gm = global_magnitude(ys);
  rep.wad = *std::min_element(ad.begin(), ad.end());
  rep.bad = *std::max_element(ad.begin(), ad.end());
  const auto nonneg = std::count_if(ad.begin(), ad.end(), [](double d) { return d >= 0.0; });
  rep.p_ad_nonneg = static_cast<double>(nonneg) / static_cast<double>(ad.size());
  rep.flags = robustness_flags(*rep.r_slope, *rep.wad, *rep.bad, t);
  return rep;
}

RobustnessReport evaluate_gm_only(const AccuracyCurve& curve, const Thresholds& t) {
  RobustnessReport rep;
  rep.thresholds = t;
  rep.gm = global_magnitude(curve);
  return rep;
}

GmAggregate gm_table_aggregate(const GmTable& table) {
  GmAggregate out;
  if (table.empty()) return out;
  const auto& first = table.begin()->second;
  if (first.empty()) throw ShapeError("row '" + table.begin()->first + "' has no factors");
  for (const auto& [method, row] : table) {
    if (row.size() != first.size() ||
        !std::equal(row.begin(), row.end(), first.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw ShapeError("row '" + method + "' has a different factor set");
    }
  }
  for (const auto& [method, row] : table) {
    double sum = 0.0;
    for (const auto& [factor, gm] : row) {
      sum += gm;
      out.a_avg[factor] += gm;
    }
    out.f_avg[method] = sum / static_cast<double>(row.size());
  }
  for (auto& [factor, sum] : out.a_avg) sum /= static_cast<double>(table.size());
  return out;
}

}  // namespace ressl
