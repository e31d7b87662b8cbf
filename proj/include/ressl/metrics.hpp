#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ressl {

// The controlled factor a curve is swept over.
enum class Factor { r, r_s, c_n, c_i, c_ib, nearness, legacy_rho };

std::string_view factor_name(Factor f) noexcept;
// Accepts the canonical names ("r", "r_s", "C_n", "C_i", "C_ib", "nearness", "legacy_rho").
std::optional<Factor> parse_factor(std::string_view name) noexcept;
// Ordered factors support slope-type metrics; C_i and nearness do not.
bool is_ordered(Factor f) noexcept;

struct CurvePoint {
  double x = 0.0;
  double acc_mean = 0.0;
  std::vector<double> acc_per_seed;
};

// Accuracy as a function of one factor. Construction validates: non-empty,
// strictly increasing x, accuracies in [0,1], and acc_mean equal to the mean
// of acc_per_seed (1e-12) whenever per-seed values are present.
class AccuracyCurve {
 public:
  AccuracyCurve(Factor factor, std::vector<CurvePoint> points);

  static AccuracyCurve from_means(Factor factor, std::span<const double> xs,
                                  std::span<const double> means);
  // Means are the arithmetic mean of each point's per-seed accuracies.
  static AccuracyCurve from_seeds(Factor factor, std::span<const double> xs,
                                  std::vector<std::vector<double>> per_seed);

  Factor factor() const noexcept { return factor_; }
  std::span<const CurvePoint> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  std::vector<double> xs() const;
  std::vector<double> means() const;

 private:
  Factor factor_;
  std::vector<CurvePoint> points_;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares of ys on xs. Requires >= 2 points and at least two
// distinct x values.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);
// Sum of absolute deviations from the mean.
double global_magnitude(std::span<const double> ys);
// (y[i+1]-y[i]) / (x[i+1]-x[i]); requires strictly increasing xs.
std::vector<double> adjacent_discrepancies(std::span<const double> xs, std::span<const double> ys);

double fit_slope(const AccuracyCurve& curve);
double global_magnitude(const AccuracyCurve& curve);
std::vector<double> adjacent_discrepancies(const AccuracyCurve& curve);
double wad(const AccuracyCurve& curve);
double bad(const AccuracyCurve& curve);
// Fraction of adjacent steps with discrepancy >= 0, over n-1 steps.
double p_ad_nonneg(const AccuracyCurve& curve);

struct Thresholds {
  double global = -0.020;  // delta_g
  double worst = 0.0;      // delta_w
  double best = 0.0;       // delta_b

  bool operator==(const Thresholds&) const = default;
};

struct RobustnessFlags {
  bool global = false;
  bool worst_local = false;
  bool best_local = false;

  bool operator==(const RobustnessFlags&) const = default;
};

// global = slope >= delta_g, worst_local = wad <= delta_w, best_local = bad >= delta_b.
// Throws InvalidReportError when any input is NaN.
RobustnessFlags robustness_flags(double r_slope, double wad, double bad, const Thresholds& t);

// Slope-type fields are empty when not applicable (unordered factor or
// a single-point curve).
struct RobustnessReport {
  std::optional<double> r_slope;
  std::optional<double> intercept;
  double gm = 0.0;
  std::optional<double> wad;
  std::optional<double> bad;
  std::optional<double> p_ad_nonneg;
  std::optional<RobustnessFlags> flags;
  Thresholds thresholds;
  std::vector<std::string> warnings;

  bool has_slope_metrics() const noexcept { return r_slope.has_value(); }
  bool operator==(const RobustnessReport&) const = default;
};

// All five metrics plus flags.
RobustnessReport evaluate_full(const AccuracyCurve& curve, const Thresholds& t);
RobustnessReport evaluate_gm_only(const AccuracyCurve& curve, const Thresholds& t);

// method -> factor -> GM
using GmTable = std::map<std::string, std::map<std::string, double>>;

struct GmAggregate {
  std::map<std::string, double> f_avg;  // row means, per method
  std::map<std::string, double> a_avg;  // column means, per factor
};

// Throws ShapeError when rows do not share the same factor set.
GmAggregate gm_table_aggregate(const GmTable& table);

}  // namespace ressl
