#include "masafl/reporting.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "masafl/error.hpp"

namespace masafl {
namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string fixed(double v, int digits = 2) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
  return ec == std::errc() ? std::string(buf.data(), ptr) : std::string("nan");
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericError("cannot format number");
  return std::string(buf.data(), ptr);
}

std::string rounds_csv(const ExperimentReport& report) {
  std::string out = "round,ma,ba,ra,tpr,fpr,n_selected\n";
  for (const auto& r : report.rounds) {
    out += std::to_string(r.round);
    out += ',' + format_number(r.ma);
    out += ',' + format_number(r.ba);
    out += ',' + format_number(r.ra);
    out += ',' + (r.tpr ? format_number(*r.tpr) : std::string());
    out += ',' + (r.fpr ? format_number(*r.fpr) : std::string());
    out += ',' + std::to_string(r.selected.size());
    out += '\n';
  }
  return out;
}

std::string report_json(const ExperimentReport& report) {
  json j;
  j["version"] = kVersion;
  j["config"] = json::parse(serialize_config(report.config));
  const auto& s = report.summary;
  j["summary"] = {{"window_rounds", s.window_rounds},
                  {"ma", s.ma},
                  {"ba", s.ba},
                  {"ra", s.ra},
                  {"final_ma", s.final_ma},
                  {"final_ba", s.final_ba},
                  {"final_ra", s.final_ra},
                  {"tpr_all", optional_number(s.tpr_all)},
                  {"fpr_all", optional_number(s.fpr_all)},
                  {"tpr_post_warmup", optional_number(s.tpr_post_warmup)},
                  {"fpr_post_warmup", optional_number(s.fpr_post_warmup)}};
  json rounds = json::array();
  for (const auto& r : report.rounds) {
    json row = {{"round", r.round},
                {"ma", r.ma},
                {"ba", r.ba},
                {"ra", r.ra},
                {"tpr", optional_number(r.tpr)},
                {"fpr", optional_number(r.fpr)},
                {"sampled", r.sampled},
                {"malicious_sampled", r.malicious_sampled},
                {"selected", r.selected},
                {"global_update_norm", r.global_update_norm}};
    if (!r.unlearning.empty()) {
      json clients = json::array();
      for (const auto& c : r.unlearning) {
        clients.push_back({{"client_id", c.client_id},
                           {"malicious", c.malicious},
                           {"accumulated_loss", c.accumulated_loss},
                           {"mds", c.score},
                           {"selected", c.selected}});
      }
      row["unlearning"] = {{"clients", clients},
                           {"median", r.mds_median},
                           {"sigma", r.mds_sigma},
                           {"fallback_used", r.fallback_used},
                           {"cap_events", r.cap_events}};
    }
    rounds.push_back(std::move(row));
  }
  j["rounds"] = std::move(rounds);
  return j.dump(2) + "\n";
}

std::string summary_table(const ExperimentReport& report) {
  const auto& cfg = report.config;
  const auto& s = report.summary;
  std::ostringstream out;
  out << "Scenario: dataset=" << cfg.dataset.source << " attack=" << to_string(cfg.attack.kind)
      << " distribution=" << to_string(cfg.federation.distribution);
  if (cfg.federation.distribution == Distribution::kDirichlet) {
    out << "(" << format_number(cfg.federation.dirichlet_alpha) << ")";
  }
  out << " clients=" << cfg.federation.n_clients << " malicious=" << cfg.malicious_count()
      << " rounds=" << cfg.federation.rounds << "\n";
  out << "Averaged over the final " << s.window_rounds << " rounds\n\n";
  out << pad("Method", 14) << pad("MA", 9) << pad("BA", 9) << pad("RA", 9) << pad("TPR", 9) << "FPR\n";
  out << pad(std::string(to_string(cfg.defense.rule)), 14) << pad(fixed(s.ma), 9) << pad(fixed(s.ba), 9)
      << pad(fixed(s.ra), 9) << pad(s.tpr_post_warmup ? fixed(*s.tpr_post_warmup) : "-", 9)
      << (s.fpr_post_warmup ? fixed(*s.fpr_post_warmup) : "-") << "\n";
  return out.str();
}

EmittedFiles emit_results(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  EmittedFiles files{out_dir / "rounds.csv", out_dir / "report.json", out_dir / "summary.txt"};
  write_text(files.csv, rounds_csv(report));
  write_text(files.report, report_json(report));
  write_text(files.summary, summary_table(report));
  return files;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  json j = {{"version", manifest.version},
            {"config", json::parse(manifest.config_json)},
            {"started_at", manifest.started_at},
            {"finished_at", manifest.finished_at},
            {"outputs",
             {{"csv", manifest.outputs.csv.filename().string()},
              {"report", manifest.outputs.report.filename().string()},
              {"summary", manifest.outputs.summary.filename().string()}}}};
  write_text(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
  const json j = parse_json_file(path);
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.config_json = j.at("config").dump(2) + "\n";
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    const auto dir = path.parent_path();
    const auto& o = j.at("outputs");
    m.outputs.csv = dir / o.at("csv").get<std::string>();
    m.outputs.report = dir / o.at("report").get<std::string>();
    m.outputs.summary = dir / o.at("summary").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

Comparison compare_runs(const std::vector<std::filesystem::path>& manifest_paths) {
  if (manifest_paths.size() < 2) throw ConfigError("compare needs at least two manifests");
  Comparison cmp;
  json reference_scenario;
  for (std::size_t i = 0; i < manifest_paths.size(); ++i) {
    const RunManifest m = read_manifest(manifest_paths[i]);
    const json config = json::parse(m.config_json);
    const json scenario = {{"dataset", config.at("dataset")},
                           {"attack", config.at("attack")},
                           {"poison", config.at("poison")}};
    if (i == 0) {
      reference_scenario = scenario;
      cmp.scenario = "dataset=" + config.at("dataset").at("source").get<std::string>() +
                     " attack=" + config.at("attack").at("kind").get<std::string>();
    } else if (scenario != reference_scenario) {
      throw ConfigError("cannot compare " + manifest_paths[i].string() + " with " + manifest_paths[0].string() +
                        ": dataset/attack scenarios differ");
    }
    const json report = parse_json_file(m.outputs.report);
    ComparisonRow row;
    row.defense = config.at("defense").at("rule").get<std::string>();
    row.label = row.defense + " (" + manifest_paths[i].parent_path().filename().string() + ")";
    const auto& s = report.at("summary");
    row.ma = s.at("ma").get<double>();
    row.ba = s.at("ba").get<double>();
    row.ra = s.at("ra").get<double>();
    cmp.rows.push_back(std::move(row));
  }
  const auto& first = cmp.rows.front();
  double min_ba = first.ba;
  double max_ra = first.ra;
  for (const auto& r : cmp.rows) {
    min_ba = std::min(min_ba, r.ba);
    max_ra = std::max(max_ra, r.ra);
  }
  const double base_ba = first.ba;
  const double base_ra = first.ra;
  for (auto& r : cmp.rows) {
    r.delta_ba = r.ba - base_ba;
    r.delta_ra = r.ra - base_ra;
    r.lowest_ba = r.ba == min_ba;
    r.highest_ra = r.ra == max_ra;
  }
  return cmp;
}

std::string render_comparison(const Comparison& cmp) {
  std::size_t width = 8;
  for (const auto& r : cmp.rows) width = std::max(width, r.label.size() + 2);
  std::ostringstream out;
  out << "Scenario: " << cmp.scenario << "\n";
  out << pad("Run", width) << pad("Avg MA", 10) << pad("Avg BA", 11) << pad("Avg RA", 11) << pad("dBA", 10)
      << "dRA\n";
  for (const auto& r : cmp.rows) {
    out << pad(r.label, width) << pad(fixed(r.ma), 10) << pad(fixed(r.ba) + (r.lowest_ba ? "*" : ""), 11)
        << pad(fixed(r.ra) + (r.highest_ra ? "^" : ""), 11) << pad(fixed(r.delta_ba), 10) << fixed(r.delta_ra)
        << "\n";
  }
  out << "* lowest BA   ^ highest RA\n";
  return out.str();
}

}  // namespace masafl
