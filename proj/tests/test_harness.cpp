#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/harness.hpp"

using namespace ressl;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

// A sweep small enough to run many times per test.
ExperimentSpec tiny(Factor factor = Factor::r) {
  ExperimentSpec spec = default_experiment();
  auto& m = std::get<MixtureSpec>(spec.data);
  m.n_pool = 60;
  m.n_labeled = 25;
  m.n_test_per_class = 30;
  spec.train.epochs = 5;
  spec.train.batch_size = 16;
  spec.train.unlabeled_batch_size = 32;
  spec.train.rampup_epochs = 2;
  spec.train.tau = 0.6;
  spec.seeds = {0, 1};
  spec.factor = factor;
  spec.grid = default_grid(factor, m.k_seen, m.k_unseen);
  return spec;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ressl_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string published(const std::string& name) { return std::string(RESSL_DATA_DIR) + "/published/" + name; }

}  // namespace

TEST(Spec, DefaultExperimentShape) {
  const auto spec = default_experiment();
  EXPECT_EQ(spec.algorithms.size(), 6u);
  EXPECT_EQ(spec.grid, (std::vector<double>{0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0}));
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(spec.n_labeled(), 100u);
  EXPECT_NO_THROW(spec.validate());
}

TEST(Spec, DefaultGrids) {
  EXPECT_EQ(default_grid(Factor::c_n, 5, 5), (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_EQ(default_grid(Factor::c_i, 5, 5), (std::vector<double>{5, 6, 7, 8, 9}));
  EXPECT_EQ(default_grid(Factor::c_ib, 5, 5), (std::vector<double>{0.01, 0.02, 0.05, 0.10, 0.20}));
}

TEST(Spec, JsonRoundTrip) {
  const auto spec = tiny(Factor::c_ib);
  const json j = spec_to_json(spec);
  const auto back = spec_from_json(j);
  EXPECT_EQ(spec_to_json(back), j);
  EXPECT_EQ(back.train, spec.train);
  EXPECT_EQ(back.thresholds, spec.thresholds);
  EXPECT_EQ(std::get<MixtureSpec>(back.data).class_means, std::get<MixtureSpec>(spec.data).class_means);
}

TEST(Spec, MinimalDocumentUsesDefaults) {
  const auto spec = spec_from_json(json::parse(R"({"mixture": {}})"));
  EXPECT_EQ(spec_to_json(spec), spec_to_json(default_experiment()));
}

TEST(Spec, UnknownKeysRejectedAtEveryLevel) {
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "gird": [0]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {"sigmaa": 1}})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "train": {"lr0": 1}})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "fixed": {"ru": 1}})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "thresholds": {"g": 1}})")), ConfigError);
}

TEST(Spec, InvalidValuesRejected) {
  EXPECT_THROW(spec_from_json(json::parse(R"({})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "tabular": {}})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "grid": [0.4, 0.2]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "factor": "C_n", "grid": [0, 1]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "factor": "C_i", "grid": [4]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "factor": "speed"})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "algorithms": ["MixMatch"]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "seeds": [1, 1]})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "seeds": []})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {"sigma": "wide"}})")), ConfigError);
  EXPECT_THROW(spec_from_json(json::parse(R"({"mixture": {}, "train": {"momentum": 1.0}})")), ConfigError);
}

TEST(Spec, ShippedConfigsLoad) {
  const fs::path dir = fs::path(RESSL_DATA_DIR).parent_path() / "configs";
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_spec(entry.path().string())) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 7u);
  EXPECT_THROW(load_spec((dir / "missing.json").string()), IoError);
}

TEST(SplitForValue, FactorOverridesOneField) {
  auto spec = tiny();
  EXPECT_EQ(split_for_value(spec, 0.4, std::nullopt).r_u, 0.4);
  EXPECT_EQ(split_for_value(spec, 0.4, std::nullopt).r_s, 1.0);
  spec.factor = Factor::r_s;
  EXPECT_EQ(split_for_value(spec, 0.4, std::nullopt).r_s, 0.4);
  EXPECT_EQ(split_for_value(spec, 0.4, std::nullopt).r_u, spec.fixed.r_u);
  spec.factor = Factor::c_i;
  const auto ci = split_for_value(spec, 7, std::nullopt);
  EXPECT_EQ(ci.c_n, 1u);
  EXPECT_EQ(*ci.c_i, std::vector<std::size_t>{7});
  spec.factor = Factor::nearness;
  EXPECT_EQ(split_for_value(spec, 7, Nearness::far).nearness, Nearness::far);
  spec.factor = Factor::legacy_rho;
  const auto lg = split_for_value(spec, 0.3, std::nullopt);
  EXPECT_EQ(lg.mode, SplitMode::legacy);
  EXPECT_EQ(*lg.legacy_total, 2000u);
  EXPECT_EQ(split_for_base(spec).r_u, 0.0);
}

TEST(Seeds, DependOnlyOnMasterAndSeed) {
  EXPECT_EQ(pool_seed(0, 1), pool_seed(0, 1));
  EXPECT_NE(pool_seed(0, 1), pool_seed(0, 2));
  EXPECT_NE(pool_seed(0, 1), pool_seed(1, 1));
  EXPECT_NE(pool_seed(0, 1), split_seed(0, 1));
  EXPECT_NE(split_seed(0, 1), train_seed(0, 1));
}

TEST(Audit, SeenUnlabeledContentIdenticalAcrossRGrid) {
  const auto spec = tiny();
  const auto pools = make_pools(spec, 0);
  std::optional<std::multiset<std::vector<double>>> reference;
  for (double r : spec.grid) {
    auto split = split_for_value(spec, r, std::nullopt);
    split.seed = split_seed(spec.master_seed, 0);
    const auto b = build_bundle(pools, split, spec.n_labeled());
    std::multiset<std::vector<double>> seen;
    for (std::size_t i = 0; i < b.unlabeled.size(); ++i)
      if (b.audit[i].seen) seen.insert(b.unlabeled[i]);
    if (!reference) reference = seen;
    EXPECT_EQ(seen, *reference) << r;
  }
}

TEST(RunSweep, SinglePointSingleSeed) {
  auto spec = tiny();
  spec.algorithms = {Algorithm::pseudolabel};
  spec.grid = {0.0};
  spec.seeds = {3};
  const auto set = run_sweep(spec);
  ASSERT_EQ(set.entries.size(), 1u);
  const auto pts = set.entries[0].curve.points();
  ASSERT_EQ(pts.size(), 1u);
  auto split = split_for_value(spec, 0.0, std::nullopt);
  split.seed = split_seed(spec.master_seed, 3);
  const auto b = build_bundle(make_pools(spec, 3), split, spec.n_labeled());
  const auto expected = train(Algorithm::pseudolabel, b, spec.train, train_seed(spec.master_seed, 3));
  EXPECT_EQ(pts[0].acc_mean, expected.test_accuracy);
  EXPECT_EQ(pts[0].acc_per_seed, std::vector<double>{expected.test_accuracy});
}

TEST(RunSweep, CurveShapesAndSupervisedFlatness) {
  const auto spec = tiny();
  const auto set = run_sweep(spec);
  ASSERT_EQ(set.entries.size(), spec.algorithms.size());
  for (const auto& e : set.entries) {
    EXPECT_EQ(e.curve.size(), spec.grid.size());
    EXPECT_FALSE(e.base.has_value());
    for (const auto& p : e.curve.points()) EXPECT_EQ(p.acc_per_seed.size(), spec.seeds.size());
  }
  const auto means = set.entries[0].curve.means();
  for (double m : means) EXPECT_EQ(m, means[0]);
  const auto scored = score_curves(set, spec.thresholds);
  const auto& r = scored[0].report;
  EXPECT_NEAR(*r.r_slope, 0.0, 1e-12);
  EXPECT_NEAR(r.gm, 0.0, 1e-12);
  EXPECT_EQ(*r.wad, 0.0);
  EXPECT_EQ(*r.bad, 0.0);
  EXPECT_EQ(*r.p_ad_nonneg, 1.0);
  EXPECT_EQ(set.content_hash.size(), 16u);
  ASSERT_TRUE(set.spec.has_value());
}

TEST(RunSweep, ByteIdenticalAcrossThreadsAndOrder) {
  auto spec = tiny(Factor::c_n);
  const auto a = run_sweep(spec, {1, std::nullopt});
  const auto b = run_sweep(spec, {3, std::nullopt});
  const auto c = run_sweep(spec, {2, 12345});
  const auto d = run_sweep(spec, {1, 999});
  const auto ta = curves_csv(a);
  EXPECT_EQ(ta, curves_csv(b));
  EXPECT_EQ(ta, curves_csv(c));
  EXPECT_EQ(ta, curves_csv(d));
  const auto ma = metrics_csv(score_curves(a, spec.thresholds));
  EXPECT_EQ(ma, metrics_csv(score_curves(b, spec.thresholds)));
  EXPECT_EQ(ma, metrics_csv(score_curves(c, spec.thresholds)));
  EXPECT_EQ(a.content_hash, c.content_hash);
}

TEST(RunSweep, BaseReferenceForFactorTables) {
  auto spec = tiny(Factor::c_n);
  spec.algorithms = {Algorithm::supervised, Algorithm::pseudolabel};
  const auto set = run_sweep(spec);
  for (const auto& e : set.entries) {
    ASSERT_TRUE(e.base.has_value());
    EXPECT_EQ(e.base->acc_per_seed.size(), spec.seeds.size());
  }
  const auto csv_text = curves_csv(set);
  EXPECT_NE(csv_text.find("PseudoLabel,C_n,base,0,"), std::string::npos);
  EXPECT_NE(csv_text.find("PseudoLabel,C_n,base,mean,"), std::string::npos);
}

TEST(RunSweep, NearnessProducesTwoConditions) {
  auto spec = tiny(Factor::nearness);
  spec.algorithms = {Algorithm::pseudolabel};
  const auto set = run_sweep(spec);
  ASSERT_EQ(set.entries.size(), 2u);
  EXPECT_EQ(set.entries[0].label, "nearness:near");
  EXPECT_EQ(set.entries[1].label, "nearness:far");
  const auto scored = score_curves(set, spec.thresholds);
  for (const auto& s : scored) {
    EXPECT_FALSE(s.report.r_slope.has_value());
    EXPECT_FALSE(s.report.flags.has_value());
  }
  const auto doc = report_document(scored, set, spec.thresholds);
  ASSERT_EQ(doc["nearness"].size(), 1u);
  EXPECT_EQ(doc["nearness"][0]["near_gm"].get<double>(), scored[0].report.gm);
  EXPECT_EQ(doc["nearness"][0]["far_gm"].get<double>(), scored[1].report.gm);
}

TEST(RunSweep, SupervisedFlatAcrossLegacySweep) {
  auto spec = tiny(Factor::legacy_rho);
  spec.fixed.legacy_total = 150;
  spec.algorithms = {Algorithm::supervised};
  const auto means = run_sweep(spec).entries[0].curve.means();
  for (double m : means) EXPECT_EQ(m, means[0]);
}

TEST(RunSweep, ConstructionErrorNamesTheCell) {
  auto spec = tiny();
  spec.algorithms = {Algorithm::supervised};
  spec.fixed.c_n = 1;
  spec.fixed.unseen_budget = UnseenBudget::fixed_total;
  try {
    run_sweep(spec);
    FAIL() << "expected ConstructionError";
  } catch (const ConstructionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("algorithm=Supervised"), std::string::npos) << what;
    EXPECT_NE(what.find("value=0.4"), std::string::npos) << what;
    EXPECT_NE(what.find("seed=0"), std::string::npos) << what;
  }
}

TEST(RunSweep, TabularSource) {
  ExperimentSpec spec = tiny();
  TabularConfig t;
  t.source = {std::string(RESSL_DATA_DIR) + "/tabular/blobs6.csv", "species", {"s0", "s1", "s2"},
              {"s3", "s4", "s5"}, 40, 20};
  t.n_labeled = 30;
  spec.data = t;
  spec.fixed.c_n = 3;
  spec.algorithms = {Algorithm::supervised, Algorithm::fixmatch_lite};
  spec.grid = {0.0, 0.5, 1.0};
  const auto set = run_sweep(spec);
  EXPECT_EQ(set.entries.size(), 2u);
  EXPECT_GT(set.entries[0].curve.means()[0], 0.6);
  spec.factor = Factor::nearness;
  spec.grid = {3, 4};
  EXPECT_THROW(run_sweep(spec), ConfigError);
}

TEST(Calibration, PseudoLabelDoesNotHurtClosedSet) {
  auto spec = default_experiment();
  spec.algorithms = {Algorithm::supervised, Algorithm::pseudolabel};
  spec.grid = {0.0};
  const auto set = run_sweep(spec, {resolve_threads(std::nullopt), std::nullopt});
  const double sup = set.entries[0].curve.means()[0];
  const double pl = set.entries[1].curve.means()[0];
  EXPECT_GE(pl, sup - 0.01) << "supervised " << sup << " pseudolabel " << pl;
}

TEST(Scoring, ShortCurvesGetGmAndAWarning) {
  CurveSet set;
  set.entries.push_back(CurveEntry{"A", "r", Factor::r, {0}, std::nullopt,
                                   AccuracyCurve(Factor::r, {CurvePoint{0.0, 0.5, {0.5}}})});
  const auto scored = score_curves(set, Thresholds{});
  EXPECT_FALSE(scored[0].report.r_slope.has_value());
  EXPECT_EQ(scored[0].report.warnings.size(), 1u);
  EXPECT_EQ(scored[0].per_seed.size(), 1u);
  EXPECT_EQ(metrics_csv(scored), "algorithm,factor,r_slope,gm,bad,wad,p_ad_ge0,global_robust,worst_local_robust,"
                                 "best_local_robust\nA,r,,0.000,,,,,,\n");
}

TEST(Scoring, BaseIsExcluded) {
  CurveSet set;
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const std::vector<double> ys{0.648, 0.652, 0.663, 0.664, 0.668};
  set.entries.push_back(CurveEntry{"PseudoLabel", "C_n", Factor::c_n, {}, CurvePoint{0.0, 0.677, {}},
                                   AccuracyCurve::from_means(Factor::c_n, xs, ys)});
  const auto r = score_curves(set, Thresholds{})[0].report;
  EXPECT_NEAR(*r.r_slope, 0.005, 0.002);
  EXPECT_NEAR(r.gm, 0.036, 0.003);
  EXPECT_NEAR(*r.bad, 0.011, 0.015);
  EXPECT_NEAR(*r.wad, 0.001, 0.015);
  EXPECT_EQ(*r.p_ad_nonneg, 1.0);
}

TEST(Serialization, HalfAwayFromZero) {
  EXPECT_EQ(csv::format_fixed(1.0625), "1.063");
  EXPECT_EQ(csv::format_fixed(-1.0625), "-1.063");
  EXPECT_EQ(csv::format_fixed(0.5, 0), "1");
  EXPECT_EQ(csv::format_fixed(-0.5, 0), "-1");
  EXPECT_EQ(csv::format_fixed(-0.0004), "0.000");
  EXPECT_EQ(csv::format_fixed(0.3330), "0.333");
  RobustnessReport r;
  r.r_slope = -0.0205;
  r.gm = 0.0625;
  r.bad = 0.0;
  r.wad = -0.0455;
  r.p_ad_nonneg = 1.0 / 3.0;
  r.flags = RobustnessFlags{true, true, false};
  const auto text = metrics_csv({ScoredCurve{"M", "r", Factor::r, r, {}}});
  EXPECT_NE(text.find("M,r,-0.021,0.063,0.000,-0.046,0.333,true,true,false"), std::string::npos) << text;
}

TEST(Serialization, ReportJsonRoundTripsAtFullPrecision) {
  RobustnessReport r;
  r.r_slope = -0.020357142857142858;
  r.intercept = 0.67512;
  r.gm = 0.038285714285714284;
  r.wad = -0.04500000000000004;
  r.bad = 1e-300;
  r.p_ad_nonneg = 1.0 / 3.0;
  r.flags = RobustnessFlags{false, true, true};
  r.thresholds = {-0.02, 0.001, -1e-9};
  r.warnings = {"note"};
  EXPECT_EQ(report_from_json(json::parse(report_to_json(r).dump())), r);
  RobustnessReport gm_only;
  gm_only.gm = 0.1 + 0.2;
  EXPECT_EQ(report_from_json(json::parse(report_to_json(gm_only).dump())), gm_only);
  EXPECT_THROW(report_from_json(json::parse(R"({"r_slope": 1})")), InvalidReportError);
}

TEST(Serialization, CurvesCsvRoundTrip) {
  auto spec = tiny(Factor::c_ib);
  spec.algorithms = {Algorithm::supervised, Algorithm::ict};
  const auto set = run_sweep(spec);
  const auto text = curves_csv(set);
  EXPECT_EQ(text.substr(0, text.find('\n')), "algorithm,factor,value,seed,accuracy");
  std::istringstream in(text);
  const auto back = read_curves_csv(in);
  EXPECT_EQ(curves_csv(back), text);
  EXPECT_EQ(back.content_hash, set.content_hash);
  EXPECT_EQ(metrics_csv(score_curves(back, spec.thresholds)), metrics_csv(score_curves(set, spec.thresholds)));
}

TEST(Serialization, CurvesCsvParseErrorsCarryLineNumbers) {
  std::istringstream bad("algorithm,factor,value,seed,accuracy\nA,r,0,0,0.5\nA,r,zero,0,0.5\n");
  try {
    read_curves_csv(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream header("alg,factor\n");
  EXPECT_THROW(read_curves_csv(header), ParseError);
  std::istringstream mean("algorithm,factor,value,seed,accuracy\nA,r,0,0,0.5\nA,r,0,mean,0.6\n");
  EXPECT_THROW(read_curves_csv(mean), ParseError);
}

TEST(Serialization, MergeRejectsDuplicates) {
  std::istringstream a("algorithm,factor,value,seed,accuracy\nA,r,0,mean,0.5\nA,r,1,mean,0.4\n");
  std::istringstream b("algorithm,factor,value,seed,accuracy\nA,r,0,mean,0.5\n");
  std::vector<CurveSet> sets;
  sets.push_back(read_curves_csv(a));
  sets.push_back(read_curves_csv(b));
  EXPECT_THROW(merge_curves(std::move(sets)), ConfigError);
}

TEST(GmCrossTable, PublishedAggregates) {
  const std::map<std::string, std::vector<double>> rows{{"PseudoLabel", {0.038, 0.036, 0.004, 0.008}},
                                                        {"ICT", {0.007, 0.014, 0.028, 0.002}}};
  const std::vector<std::string> factors{"r", "C_n", "C_i", "C_ib"};
  std::vector<ScoredCurve> scored;
  for (const auto& [alg, gms] : rows)
    for (std::size_t f = 0; f < factors.size(); ++f) {
      ScoredCurve s{alg, factors[f], *parse_factor(factors[f]), {}, {}};
      s.report.gm = gms[f];
      scored.push_back(s);
    }
  ScoredCurve nearness{"ICT", "nearness:near", Factor::nearness, {}, {}};
  scored.push_back(nearness);
  const auto table = gm_cross_table(scored);
  ASSERT_TRUE(table.has_value());
  EXPECT_EQ(table->at("ICT").size(), 4u);
  const auto agg = gm_table_aggregate(*table);
  EXPECT_NEAR(agg.f_avg.at("PseudoLabel"), 0.021, 0.001);
  scored.resize(1);
  EXPECT_FALSE(gm_cross_table(scored).has_value());
}

TEST(EmitReport, WritesAllFilesAndRederivableSummary) {
  auto r_spec = tiny();
  r_spec.algorithms = {Algorithm::supervised, Algorithm::pseudolabel};
  auto cn_spec = r_spec;
  cn_spec.factor = Factor::c_n;
  cn_spec.grid = default_grid(Factor::c_n, 5, 5);
  std::vector<CurveSet> sets;
  sets.push_back(run_sweep(r_spec));
  sets.push_back(run_sweep(cn_spec));
  const auto merged = merge_curves(std::move(sets));
  const auto scored = score_curves(merged, r_spec.thresholds);
  const auto dir = scratch("emit");
  emit_report(scored, merged, r_spec.thresholds, dir.string());
  for (const char* f : {"curves.csv", "metrics.csv", "report.json", "summary.md"}) EXPECT_TRUE(fs::exists(dir / f));

  const json doc = json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(doc["defaults_version"], "ressl-defaults-v1");
  EXPECT_EQ(doc["content_hash"], merged.content_hash);
  ASSERT_FALSE(doc["gm_table"].is_null());
  EXPECT_EQ(report_from_json(doc["reports"][1]["report"]), scored[1].report);
  EXPECT_EQ(doc["reports"][1]["per_seed"].size(), 2u);

  // Recompute every summary number from curves.csv with a hand-written
  // parser and the metric functions.
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> means;
  std::istringstream curves(slurp(dir / "curves.csv"));
  std::string line;
  std::getline(curves, line);
  while (std::getline(curves, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f[3] == "mean") means[{f[0], f[1]}][f[2]] = std::stod(f[4]);
  }
  std::map<std::string, std::map<std::string, double>> gms;
  std::string summary = slurp(dir / "summary.md");
  for (const auto& [key, pts] : means) {
    std::vector<double> xs, ys;
    for (const auto& [v, m] : pts) {
      if (v == "base") continue;
      xs.push_back(std::stod(v));
      ys.push_back(m);
    }
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> sx, sy;
    for (std::size_t i : order) {
      sx.push_back(xs[i]);
      sy.push_back(ys[i]);
    }
    std::string row = "| " + key.first + " |";
    if (pts.count("base")) row += " " + csv::format_fixed(pts.at("base")) + " |";
    for (double y : sy) row += " " + csv::format_fixed(y) + " |";
    const auto ad = adjacent_discrepancies(sx, sy);
    const double gm = global_magnitude(sy);
    gms[key.first][key.second] = gm;
    row += " " + csv::format_fixed(fit_line(sx, sy).slope) + " | " + csv::format_fixed(gm) + " | " +
           csv::format_fixed(*std::max_element(ad.begin(), ad.end())) + " | " +
           csv::format_fixed(*std::min_element(ad.begin(), ad.end())) + " | " +
           csv::format_fixed(static_cast<double>(std::count_if(ad.begin(), ad.end(), [](double d) { return d >= 0; })) /
                             static_cast<double>(ad.size())) +
           " |";
    EXPECT_NE(summary.find(row + "\n"), std::string::npos) << row << "\n" << summary;
  }
  for (const auto& [alg, row] : gms) {
    const double f_avg = (row.at("r") + row.at("C_n")) / 2.0;
    const std::string expected = "| " + alg + " | " + csv::format_fixed(row.at("C_n")) + " | " +
                                 csv::format_fixed(row.at("r")) + " | " + csv::format_fixed(f_avg) + " |";
    EXPECT_NE(summary.find(expected), std::string::npos) << expected;
  }
  EXPECT_NE(summary.find("F_avg"), std::string::npos);
  EXPECT_NE(summary.find("| A_avg |"), std::string::npos);
  fs::remove_all(dir);
}

TEST(EmitReport, UnwritableDirectoryIsAnIoError) {
  const auto file = scratch("not_a_dir");
  std::ofstream(file) << "x";
  EXPECT_THROW(emit_report({}, CurveSet{}, Thresholds{}, (file / "sub").string()), IoError);
  fs::remove(file);
}

TEST(Replay, PublishedTableOne) {
  const auto rows = replay_file(published("table1_r.csv"));
  std::map<std::string, RobustnessReport> by;
  for (const auto& r : rows) by[r.method] = r.report;
  const auto& pl = by.at("PseudoLabel");
  EXPECT_NEAR(*pl.r_slope, -0.020, 0.002);
  EXPECT_NEAR(pl.gm, 0.038, 0.003);
  EXPECT_NEAR(*pl.bad, 0.000, 0.015);
  EXPECT_NEAR(*pl.wad, -0.045, 0.015);
  EXPECT_EQ(csv::format_fixed(*pl.p_ad_nonneg), "0.333");
  EXPECT_NEAR(by.at("PiModel").gm, 0.066, 0.003);
  const auto& sup = by.at("Supervised");
  EXPECT_EQ(*sup.r_slope, 0.0);
  EXPECT_EQ(sup.gm, 0.0);
  EXPECT_EQ(*sup.p_ad_nonneg, 1.0);
  EXPECT_EQ(rows.size(), 16u);
}

TEST(Replay, SkipsBaseRowsAndFormatsOutput) {
  std::istringstream in("method,factor_value,accuracy\nM,base,0.9\nM,1,0.5\nM,2,0.5\nM,3,0.5\n");
  const auto rows = replay(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(replay_csv(rows), "method,r_slope,gm,bad,wad,p_ad_ge0\nM,0.000,0.000,0.000,0.000,1.000\n");
}

TEST(Replay, MalformedRowsReportTheLine) {
  std::istringstream in("method,factor_value,accuracy\nM,0,0.5\nM,0.2\n");
  try {
    replay(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream order("M,0.2,0.5\nM,0.1,0.5\n");
  try {
    replay(order);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream range("M,0.2,1.5\n");
  EXPECT_THROW(replay(range), ParseError);
  EXPECT_THROW(replay_file("/nonexistent/table.csv"), IoError);
}

TEST(Threads, Resolution) {
  EXPECT_EQ(resolve_threads(3), 3u);
  EXPECT_THROW(resolve_threads(0), ConfigError);
  setenv("RESSL_THREADS", "5", 1);
  EXPECT_EQ(resolve_threads(std::nullopt), 5u);
  EXPECT_EQ(resolve_threads(2), 2u);
  setenv("RESSL_THREADS", "many", 1);
  EXPECT_THROW(resolve_threads(std::nullopt), ConfigError);
  unsetenv("RESSL_THREADS");
  EXPECT_GE(resolve_threads(std::nullopt), 1u);
}

class Cli : public ::testing::Test {
 protected:
  static int run(const std::string& args) {
    const std::string cmd = std::string(RESSL_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }
};

TEST_F(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  EXPECT_EQ(run("replay " + published("table3_cn.csv")), 0);
  EXPECT_EQ(run("replay /nonexistent.csv"), 5);
  std::ofstream(dir / "bad.json") << R"({"mixture": {}, "colour": 1})";
  EXPECT_EQ(run("run --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string()), 2);
  std::ofstream(dir / "infeasible.json")
      << R"({"mixture": {"n_pool": 40, "n_labeled": 25, "n_test_per_class": 5}, "algorithms": ["Supervised"],
            "seeds": [0], "grid": [1.0], "fixed": {"c_n": 1, "unseen_budget": "fixed_total"},
            "train": {"epochs": 1}})";
  EXPECT_EQ(run("run --config " + (dir / "infeasible.json").string() + " --out " + (dir / "o").string()), 3);
  std::ofstream(dir / "small.json")
      << R"({"mixture": {"n_pool": 40, "n_labeled": 25, "n_test_per_class": 5}, "algorithms": ["Supervised"],
            "seeds": [0], "train": {"epochs": 2}})";
  EXPECT_EQ(run("run --config " + (dir / "small.json").string() + " --out " + (dir / "o").string() +
                " --threads 2 --factor C_n --grid 1,2,3"),
            0);
  EXPECT_TRUE(fs::exists(dir / "o" / "summary.md"));
  EXPECT_EQ(run("report --curves " + (dir / "o" / "curves.csv").string() + " --out " + (dir / "r").string()), 0);
  EXPECT_EQ(slurp(dir / "r" / "metrics.csv"), slurp(dir / "o" / "metrics.csv"));
  EXPECT_EQ(run("gen --config " + (dir / "small.json").string() + " --out " + (dir / "g").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "g" / "pools_seed0.jsonl"));
  EXPECT_EQ(run("run --config " + (dir / "small.json").string() + " --grid 1,x"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  fs::remove_all(dir);
}
