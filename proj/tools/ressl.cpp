#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ressl/csv.hpp"
#include "ressl/error.hpp"
#include "ressl/harness.hpp"

namespace {

using namespace ressl;

struct Overrides {
  std::string factor;
  std::string grid;
  std::string seeds;
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  for (const auto& f : csv::split(text)) {
    const auto v = csv::parse_double(f);
    if (!v) throw ConfigError("--grid: '" + f + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& f : csv::split(text)) {
    const auto v = csv::parse_int(f);
    if (!v || *v < 0) throw ConfigError("--seeds: '" + f + "' is not a non-negative integer");
    out.push_back(static_cast<std::uint64_t>(*v));
  }
  return out;
}

ExperimentSpec load_with_overrides(const std::string& config, const Overrides& ov) {
  ExperimentSpec spec = config.empty() ? default_experiment() : load_spec(config);
  if (!ov.factor.empty()) {
    const auto f = parse_factor(ov.factor);
    if (!f) throw ConfigError("--factor: unknown factor '" + ov.factor + "'");
    if (*f != spec.factor && ov.grid.empty()) {
      std::size_t ks = 0, ku = 0;
      if (const auto* m = std::get_if<MixtureSpec>(&spec.data)) {
        ks = m->k_seen;
        ku = m->k_unseen;
      } else {
        const auto& t = std::get<TabularConfig>(spec.data);
        ks = t.source.seen_labels.size();
        ku = t.source.unseen_labels.size();
      }
      spec.grid = default_grid(*f, ks, ku);
    }
    spec.factor = *f;
  }
  if (!ov.grid.empty()) spec.grid = parse_grid(ov.grid);
  if (!ov.seeds.empty()) spec.seeds = parse_seeds(ov.seeds);
  spec.validate();
  return spec;
}

int run_main(int argc, char** argv) {
  CLI::App app{"Robustness evaluation of semi-supervised learners under unseen-class contamination"};
  app.require_subcommand(1);

  std::string config, out_dir;
  std::optional<std::size_t> threads;
  Overrides ov;

  auto* gen = app.add_subcommand("gen", "Sample the data pools of a config and dump them as JSON lines");
  gen->add_option("--config", config, "Experiment spec (JSON)");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seeds", ov.seeds, "Comma-separated seed list");

  auto* run = app.add_subcommand("run", "Run an experiment sweep and write the report");
  run->add_option("--config", config, "Experiment spec (JSON); defaults to the built-in experiment");
  run->add_option("--out", out_dir, "Output directory (default: the config's output_dir)");
  run->add_option("--threads", threads, "Worker threads (default: RESSL_THREADS or all cores)");
  run->add_option("--factor", ov.factor, "Factor to sweep: r, r_s, C_n, C_i, C_ib, nearness, legacy_rho");
  run->add_option("--grid", ov.grid, "Comma-separated factor values");
  run->add_option("--seeds", ov.seeds, "Comma-separated seed list");

  std::string table;
  auto* rep = app.add_subcommand("replay", "Recompute metrics from a long-format accuracy table");
  rep->add_option("table", table, "CSV with columns method,factor_value,accuracy")->required();
  rep->add_option("--out", out_dir, "Write the metric table to this file instead of stdout");

  std::vector<std::string> curve_files;
  auto* report = app.add_subcommand("report", "Re-score existing curves.csv files");
  report->add_option("--curves", curve_files, "curves.csv (repeatable)")->required();
  report->add_option("--config", config, "Spec whose thresholds to apply");
  report->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  if (gen->parsed()) {
    const ExperimentSpec spec = load_with_overrides(config, ov);
    std::filesystem::create_directories(out_dir);
    for (std::uint64_t s : spec.seeds) {
      const auto path = std::filesystem::path(out_dir) / ("pools_seed" + std::to_string(s) + ".jsonl");
      std::ofstream f(path);
      if (!f) throw IoError("cannot write " + path.string());
      write_pools_jsonl(f, make_pools(spec, s));
      std::cout << path.string() << "\n";
    }
  } else if (run->parsed()) {
    ExperimentSpec spec = load_with_overrides(config, ov);
    if (!out_dir.empty()) spec.output_dir = out_dir;
    RunOptions opts;
    opts.threads = resolve_threads(threads);
    const CurveSet curves = run_sweep(spec, opts);
    const auto scored = score_curves(curves, spec.thresholds);
    emit_report(scored, curves, spec.thresholds, spec.output_dir);
    std::cout << metrics_csv(scored);
  } else if (rep->parsed()) {
    const std::string text = replay_csv(replay_file(table));
    if (out_dir.empty()) {
      std::cout << text;
    } else {
      std::ofstream f(out_dir);
      if (!f) throw IoError("cannot write " + out_dir);
      f << text;
    }
  } else if (report->parsed()) {
    Thresholds t;
    if (!config.empty()) t = load_spec(config).thresholds;
    std::vector<CurveSet> sets;
    for (const auto& path : curve_files) {
      std::ifstream f(path);
      if (!f) throw IoError("cannot open " + path);
      sets.push_back(read_curves_csv(f));
    }
    const CurveSet merged = merge_curves(std::move(sets));
    const auto scored = score_curves(merged, t);
    emit_report(scored, merged, t, out_dir);
    std::cout << metrics_csv(scored);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_main(argc, argv);
  } catch (const ressl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ressl::ExitCode::io);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
