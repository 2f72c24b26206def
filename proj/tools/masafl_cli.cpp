// Command-line front end: run one experiment, sweep a parameter grid, or
// compare finished runs.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "masafl/config.hpp"
#include "masafl/error.hpp"
#include "masafl/harness.hpp"
#include "masafl/reporting.hpp"

namespace fs = std::filesystem;
using namespace masafl;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string defense;
  std::string attack;
  std::optional<std::size_t> threads;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ConfigFile load(const std::string& path) {
  if (path.empty()) return parse_config_text("");
  return parse_config_file(path);
}

void apply(const Overrides& o, ExperimentConfig& cfg) {
  if (o.seed) cfg.seed = *o.seed;
  if (!o.defense.empty()) cfg.defense.rule = parse_defense_kind(o.defense);
  if (!o.attack.empty()) cfg.attack.kind = parse_attack_kind(o.attack);
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
}

ExperimentReport run_one(const ExperimentConfig& cfg, const fs::path& out_dir) {
  RunManifest manifest;
  manifest.config_json = serialize_config(cfg);
  manifest.started_at = utc_now();
  ExperimentReport report = run_experiment(cfg);
  manifest.outputs = emit_results(report, out_dir);
  manifest.finished_at = utc_now();
  write_manifest(manifest, out_dir / "manifest.json");
  return report;
}

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

int cmd_run(const std::string& config_path, const std::string& out, const Overrides& o) {
  ConfigFile file = load(config_path);
  apply(o, file.experiment);
  const ExperimentReport report = run_one(file.experiment, out);
  std::cout << summary_table(report);
  std::cout << "results written to " << out << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out, const Overrides& o) {
  ConfigFile file = load(config_path);
  apply(o, file.experiment);
  const SweepGrid& grid = file.sweep;
  if (grid.empty()) throw ConfigError("'sweep' section is empty; nothing to vary");

  using Setter = std::function<void(ExperimentConfig&, double)>;
  struct Axis {
    std::string name;
    std::vector<double> values;
    Setter set;
  };
  std::vector<Axis> axes;
  auto add = [&](const char* name, const std::vector<double>& values, Setter set) {
    if (!values.empty()) axes.push_back({name, values, std::move(set)});
  };
  add("fusion_degree", grid.fusion_degree, [](ExperimentConfig& c, double v) { c.defense.masa.fusion_degree = v; });
  add("filter_radius", grid.filter_radius, [](ExperimentConfig& c, double v) { c.defense.masa.filter_radius = v; });
  add("poison_ratio", grid.poison_ratio, [](ExperimentConfig& c, double v) { c.poison.ratio = v; });
  add("dirichlet_alpha", grid.dirichlet_alpha, [](ExperimentConfig& c, double v) {
    c.federation.distribution = Distribution::kDirichlet;
    c.federation.dirichlet_alpha = v;
  });
  add("proxy_fraction", grid.proxy_fraction, [](ExperimentConfig& c, double v) { c.proxy.fraction = v; });

  std::string header;
  for (const auto& a : axes) header += a.name + ",";
  std::string table = header + "ma,ba,ra,tpr,fpr,run\n";

  std::vector<std::size_t> index(axes.size(), 0);
  for (;;) {
    ExperimentConfig cfg = file.experiment;
    std::string name;
    std::string values;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const double v = axes[a].values[index[a]];
      axes[a].set(cfg, v);
      name += (name.empty() ? "" : "_") + axes[a].name + "-" + format_number(v);
      values += format_number(v) + ",";
    }
    cfg.validate();
    const ExperimentReport report = run_one(cfg, fs::path(out) / name);
    const auto& s = report.summary;
    table += values + format_number(s.ma) + "," + format_number(s.ba) + "," + format_number(s.ra) + "," +
             opt(s.tpr_post_warmup) + "," + opt(s.fpr_post_warmup) + "," + name + "\n";
    std::cout << name << ": MA " << format_number(s.ma) << " BA " << format_number(s.ba) << " RA "
              << format_number(s.ra) << "\n";

    std::size_t a = 0;
    while (a < axes.size() && ++index[a] == axes[a].values.size()) index[a++] = 0;
    if (a == axes.size()) break;
  }
  std::ofstream sweep_csv(fs::path(out) / "sweep.csv", std::ios::binary | std::ios::trunc);
  if (!sweep_csv) throw IoError("cannot write " + (fs::path(out) / "sweep.csv").string());
  sweep_csv << table;
  return 0;
}

int cmd_compare(const std::vector<std::string>& manifests, const std::string& out) {
  std::vector<fs::path> paths(manifests.begin(), manifests.end());
  const std::string text = render_comparison(compare_runs(paths));
  std::cout << text;
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + out);
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated backdoor-defense simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "results";
  Overrides overrides;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON); defaults apply when omitted");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--defense", overrides.defense, "fedavg|fedavg_star|multi_krum|rfa|rlr|masa");
    sub->add_option("--attack", overrides.attack, "none|badnet|dba|scaling|pgd|neurotoxin|lie");
    sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
  };

  CLI::App* run = app.add_subcommand("run", "Run a single experiment");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "Run every combination in the config's sweep grid");
  add_common(sweep);

  CLI::App* compare = app.add_subcommand("compare", "Compare finished runs side by side");
  std::vector<std::string> manifests;
  std::string compare_out;
  compare->add_option("manifests", manifests, "manifest.json files of the runs")->required()->expected(2, -1);
  compare->add_option("--out", compare_out, "Also write the table to this file");

  CLI11_PARSE(app, argc, argv);

  auto collect = [&](CLI::App* sub) {
    if (sub->count("--seed") > 0) overrides.seed = seed;
    if (sub->count("--threads") > 0) overrides.threads = threads;
  };

  try {
    if (run->parsed()) {
      collect(run);
      return cmd_run(config_path, out_dir, overrides);
    }
    if (sweep->parsed()) {
      collect(sweep);
      return cmd_sweep(config_path, out_dir, overrides);
    }
    return cmd_compare(manifests, compare_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
