#include "masafl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "masafl/error.hpp"

namespace masafl {
namespace {

using nlohmann::json;

// Typed access to one JSON object, with the dotted key path kept for errors.
class Section {
 public:
  Section(const json& node, std::string path, std::set<std::string> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError(label() + ": expected an object");
    }
    for (const auto& [key, _] : node_.items()) {
      if (!allowed.contains(key)) {
        throw ConfigError("unknown key '" + qualified(key) + "'");
      }
    }
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  Section child(const std::string& key, std::set<std::string> allowed) const {
    return Section(node_.at(key), qualified(key), std::move(allowed));
  }

  void read(const std::string& key, double& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError("'" + qualified(key) + "' must be a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError("'" + qualified(key) + "' must be finite");
  }

  void read(const std::string& key, std::optional<double>& out) const {
    if (!has(key)) return;
    double v = 0.0;
    read(key, v);
    out = v;
  }

  void read(const std::string& key, std::size_t& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError("'" + qualified(key) + "' must be a non-negative integer");
    }
    out = v.get<std::size_t>();
  }

  void read(const std::string& key, std::optional<std::size_t>& out) const {
    if (!has(key)) return;
    std::size_t v = 0;
    read(key, v);
    out = v;
  }

  void read(const std::string& key, std::uint64_t& out, bool) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError("'" + qualified(key) + "' must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void read(const std::string& key, int& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_number_integer()) throw ConfigError("'" + qualified(key) + "' must be an integer");
    out = v.get<int>();
  }

  void read(const std::string& key, bool& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError("'" + qualified(key) + "' must be true or false");
    out = v.get<bool>();
  }

  void read(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_string()) throw ConfigError("'" + qualified(key) + "' must be a string");
    out = v.get<std::string>();
  }

  void read(const std::string& key, std::vector<double>& out) const {
    if (!has(key)) return;
    const json& v = node_.at(key);
    if (!v.is_array()) throw ConfigError("'" + qualified(key) + "' must be an array of numbers");
    out.clear();
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("'" + qualified(key) + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& node_;
  std::string path_;
};

template <typename Fn>
void rethrow_as(const std::string& key, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(Distribution d) { return d == Distribution::kIid ? "iid" : "dirichlet"; }

bool SweepGrid::empty() const {
  return fusion_degree.empty() && filter_radius.empty() && poison_ratio.empty() && dirichlet_alpha.empty() &&
         proxy_fraction.empty();
}

std::size_t ExperimentConfig::malicious_count() const {
  if (attack.kind == AttackKind::kNone) return 0;
  return static_cast<std::size_t>(
      std::floor(federation.attack_ratio * static_cast<double>(federation.n_clients) + 1e-9));
}

std::size_t ExperimentConfig::warmup_rounds() const {
  return federation.warmup_rounds.value_or(federation.rounds / 4);
}

void ExperimentConfig::validate() const {
  const auto& fed = federation;
  if (fed.n_clients == 0) throw ConfigError("'federation.n_clients' must be >= 1");
  if (fed.rounds == 0) throw ConfigError("'federation.rounds' must be >= 1 (T >= 1)");
  if (fed.clients_per_round == 0 || fed.clients_per_round > fed.n_clients) {
    throw ConfigError("'federation.clients_per_round' must satisfy 1 <= k <= n_clients");
  }
  if (!(fed.attack_ratio >= 0.0 && fed.attack_ratio < 0.5)) {
    throw ConfigError("'federation.attack_ratio' must satisfy 0 <= f/n < 0.5");
  }
  if (fed.distribution == Distribution::kDirichlet && !(fed.dirichlet_alpha > 0.0)) {
    throw ConfigError("'federation.dirichlet_alpha' must be > 0");
  }
  if (dataset.source != "synthetic" && dataset.source != "idx") {
    throw ConfigError("'dataset.source' must be 'synthetic' or 'idx'");
  }
  if (dataset.source == "synthetic") {
    if (dataset.classes < 4) throw ConfigError("'dataset.classes' must be >= 4");
    if (dataset.image_rows < 8 || dataset.image_cols < 8) {
      throw ConfigError("'dataset.image_rows' and 'dataset.image_cols' must be >= 8");
    }
    if (dataset.train_per_class == 0 || dataset.test_per_class == 0) {
      throw ConfigError("'dataset.train_per_class' and 'dataset.test_per_class' must be >= 1");
    }
  } else if (dataset.train_images.empty() || dataset.train_labels.empty() || dataset.test_images.empty() ||
             dataset.test_labels.empty()) {
    throw ConfigError("'dataset' with source 'idx' needs train_images, train_labels, test_images, test_labels");
  }
  if (hidden_units == 0) throw ConfigError("'model.hidden_units' must be >= 1");
  rethrow_as("train", [&] { train.validate(); });
  rethrow_as("attack", [&] { attack.validate(); });
  if (!(poison.ratio >= 0.0 && poison.ratio <= 1.0)) throw ConfigError("'poison.ratio' must lie in [0, 1]");
  if (poison.target_label < 0) throw ConfigError("'poison.target_label' must be >= 0");
  if (dataset.source == "synthetic" && poison.target_label >= dataset.classes) {
    throw ConfigError("'poison.target_label' must be < dataset.classes");
  }
  rethrow_as("defense.masa", [&] { defense.masa.validate(); });
  if (defense.rfa.max_iters == 0) throw ConfigError("'defense.rfa.max_iters' must be >= 1");
  if (!(defense.rfa.tol > 0.0)) throw ConfigError("'defense.rfa.tol' must be > 0");
  if (!(defense.rfa.smoothing > 0.0)) throw ConfigError("'defense.rfa.smoothing' must be > 0");
  if (defense.rlr_threshold && !(*defense.rlr_threshold >= 0.0)) {
    throw ConfigError("'defense.rlr.sign_threshold' must be >= 0");
  }
  if (!(proxy.fraction > 0.0 && proxy.fraction <= 1.0)) {
    throw ConfigError("'proxy.fraction' must lie in (0, 1]");
  }
}

ConfigFile parse_config_text(const std::string& text) {
  json root;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    root = json::object();
  } else {
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  ConfigFile file;
  ExperimentConfig& cfg = file.experiment;
  const Section top(root, "", {"seed", "threads", "dataset", "federation", "model", "train", "attack", "poison",
                               "defense", "proxy", "sweep"});
  top.read("seed", cfg.seed, true);
  top.read("threads", cfg.threads);

  if (top.has("dataset")) {
    const auto s = top.child("dataset", {"source", "classes", "image_rows", "image_cols", "train_per_class",
                                         "test_per_class", "train_images", "train_labels", "test_images",
                                         "test_labels"});
    auto& d = cfg.dataset;
    s.read("source", d.source);
    s.read("classes", d.classes);
    s.read("image_rows", d.image_rows);
    s.read("image_cols", d.image_cols);
    s.read("train_per_class", d.train_per_class);
    s.read("test_per_class", d.test_per_class);
    s.read("train_images", d.train_images);
    s.read("train_labels", d.train_labels);
    s.read("test_images", d.test_images);
    s.read("test_labels", d.test_labels);
  }
  if (top.has("federation")) {
    const auto s = top.child("federation", {"n_clients", "clients_per_round", "rounds", "attack_ratio",
                                            "distribution", "dirichlet_alpha", "warmup_rounds"});
    auto& f = cfg.federation;
    s.read("n_clients", f.n_clients);
    f.clients_per_round = f.n_clients;
    s.read("clients_per_round", f.clients_per_round);
    s.read("rounds", f.rounds);
    s.read("attack_ratio", f.attack_ratio);
    std::string dist = std::string(to_string(f.distribution));
    s.read("distribution", dist);
    if (dist == "iid") {
      f.distribution = Distribution::kIid;
    } else if (dist == "dirichlet") {
      f.distribution = Distribution::kDirichlet;
    } else {
      throw ConfigError("'federation.distribution' must be 'iid' or 'dirichlet'");
    }
    s.read("dirichlet_alpha", f.dirichlet_alpha);
    s.read("warmup_rounds", f.warmup_rounds);
  }
  if (top.has("model")) {
    top.child("model", {"hidden_units"}).read("hidden_units", cfg.hidden_units);
  }
  if (top.has("train")) {
    const auto s = top.child("train", {"epochs", "learning_rate", "lr_decay", "momentum", "batch_size"});
    s.read("epochs", cfg.train.epochs);
    s.read("learning_rate", cfg.train.learning_rate);
    s.read("lr_decay", cfg.train.lr_decay);
    s.read("momentum", cfg.train.momentum);
    s.read("batch_size", cfg.train.batch_size);
  }
  if (top.has("attack")) {
    const auto s = top.child("attack", {"kind", "scale_factor", "pgd_radius_factor", "mask_percentile", "lie_z"});
    std::string kind = std::string(to_string(cfg.attack.kind));
    s.read("kind", kind);
    cfg.attack.kind = parse_attack_kind(kind);
    s.read("scale_factor", cfg.attack.scale_factor);
    s.read("pgd_radius_factor", cfg.attack.pgd_radius_factor);
    s.read("mask_percentile", cfg.attack.mask_percentile);
    s.read("lie_z", cfg.attack.lie_z);
  }
  if (top.has("poison")) {
    const auto s = top.child("poison", {"ratio", "target_label", "trigger"});
    s.read("ratio", cfg.poison.ratio);
    s.read("target_label", cfg.poison.target_label);
    if (s.has("trigger")) {
      const auto t = s.child("trigger", {"anchor_row", "anchor_col", "value"});
      std::size_t row = cfg.poison.trigger.anchor_row;
      std::size_t col = cfg.poison.trigger.anchor_col;
      double value = 1.0;
      t.read("anchor_row", row);
      t.read("anchor_col", col);
      t.read("value", value);
      if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("'poison.trigger.value' must lie in [0, 1]");
      cfg.poison.trigger = plus_trigger(row, col, value);
    }
  }
  if (top.has("defense")) {
    const auto s = top.child("defense", {"rule", "masa", "multi_krum", "rfa", "rlr"});
    std::string rule = std::string(to_string(cfg.defense.rule));
    s.read("rule", rule);
    cfg.defense.rule = parse_defense_kind(rule);
    if (s.has("masa")) {
      const auto m = s.child("masa", {"fusion_degree", "filter_radius", "unlearn_epochs", "unlearn_rate",
                                      "unlearn_momentum", "batch_size", "loss_cap"});
      auto& mc = cfg.defense.masa;
      m.read("fusion_degree", mc.fusion_degree);
      m.read("filter_radius", mc.filter_radius);
      m.read("unlearn_epochs", mc.unlearn_epochs);
      m.read("unlearn_rate", mc.unlearn_rate);
      m.read("unlearn_momentum", mc.unlearn_momentum);
      m.read("batch_size", mc.batch_size);
      m.read("loss_cap", mc.loss_cap);
    }
    if (s.has("multi_krum")) {
      const auto m = s.child("multi_krum", {"f", "m"});
      m.read("f", cfg.defense.krum_f);
      m.read("m", cfg.defense.krum_m);
    }
    if (s.has("rfa")) {
      const auto m = s.child("rfa", {"max_iters", "tol", "smoothing"});
      m.read("max_iters", cfg.defense.rfa.max_iters);
      m.read("tol", cfg.defense.rfa.tol);
      m.read("smoothing", cfg.defense.rfa.smoothing);
    }
    if (s.has("rlr")) {
      const auto m = s.child("rlr", {"sign_threshold", "server_lr"});
      m.read("sign_threshold", cfg.defense.rlr_threshold);
      m.read("server_lr", cfg.defense.rlr_server_lr);
    }
  }
  if (top.has("proxy")) {
    const auto s = top.child("proxy", {"fraction", "shifted"});
    s.read("fraction", cfg.proxy.fraction);
    s.read("shifted", cfg.proxy.shifted);
  }
  if (top.has("sweep")) {
    const auto s = top.child("sweep", {"fusion_degree", "filter_radius", "poison_ratio", "dirichlet_alpha",
                                       "proxy_fraction"});
    s.read("fusion_degree", file.sweep.fusion_degree);
    s.read("filter_radius", file.sweep.filter_radius);
    s.read("poison_ratio", file.sweep.poison_ratio);
    s.read("dirichlet_alpha", file.sweep.dirichlet_alpha);
    s.read("proxy_fraction", file.sweep.proxy_fraction);
  }
  cfg.validate();
  return file;
}

ConfigFile parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentConfig parse_config(const std::filesystem::path& path) { return parse_config_file(path).experiment; }

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  const auto& d = cfg.dataset;
  j["dataset"] = {{"source", d.source},
                  {"classes", d.classes},
                  {"image_rows", d.image_rows},
                  {"image_cols", d.image_cols},
                  {"train_per_class", d.train_per_class},
                  {"test_per_class", d.test_per_class},
                  {"train_images", d.train_images},
                  {"train_labels", d.train_labels},
                  {"test_images", d.test_images},
                  {"test_labels", d.test_labels}};
  const auto& f = cfg.federation;
  j["federation"] = {{"n_clients", f.n_clients},
                     {"clients_per_round", f.clients_per_round},
                     {"rounds", f.rounds},
                     {"attack_ratio", f.attack_ratio},
                     {"distribution", std::string(to_string(f.distribution))},
                     {"dirichlet_alpha", f.dirichlet_alpha},
                     {"warmup_rounds", optional_json(f.warmup_rounds)}};
  j["model"] = {{"hidden_units", cfg.hidden_units}};
  const auto& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"learning_rate", t.learning_rate},
                {"lr_decay", t.lr_decay},
                {"momentum", t.momentum},
                {"batch_size", t.batch_size}};
  const auto& a = cfg.attack;
  j["attack"] = {{"kind", std::string(to_string(a.kind))},
                 {"scale_factor", a.scale_factor},
                 {"pgd_radius_factor", a.pgd_radius_factor},
                 {"mask_percentile", a.mask_percentile},
                 {"lie_z", a.lie_z}};
  const double trigger_value = cfg.poison.trigger.pattern.empty() ? 1.0 : cfg.poison.trigger.pattern.front().value;
  j["poison"] = {{"ratio", cfg.poison.ratio},
                 {"target_label", cfg.poison.target_label},
                 {"trigger",
                  {{"anchor_row", cfg.poison.trigger.anchor_row},
                   {"anchor_col", cfg.poison.trigger.anchor_col},
                   {"value", trigger_value}}}};
  const auto& m = cfg.defense.masa;
  j["defense"] = {{"rule", std::string(to_string(cfg.defense.rule))},
                  {"masa",
                   {{"fusion_degree", m.fusion_degree},
                    {"filter_radius", m.filter_radius},
                    {"unlearn_epochs", m.unlearn_epochs},
                    {"unlearn_rate", m.unlearn_rate},
                    {"unlearn_momentum", m.unlearn_momentum},
                    {"batch_size", m.batch_size},
                    {"loss_cap", m.loss_cap}}},
                  {"multi_krum", {{"f", optional_json(cfg.defense.krum_f)}, {"m", optional_json(cfg.defense.krum_m)}}},
                  {"rfa",
                   {{"max_iters", cfg.defense.rfa.max_iters},
                    {"tol", cfg.defense.rfa.tol},
                    {"smoothing", cfg.defense.rfa.smoothing}}},
                  {"rlr",
                   {{"sign_threshold", optional_json(cfg.defense.rlr_threshold)},
                    {"server_lr", cfg.defense.rlr_server_lr}}}};
  j["proxy"] = {{"fraction", cfg.proxy.fraction}, {"shifted", cfg.proxy.shifted}};
  return j.dump(2) + "\n";
}

}  // namespace masafl
