#include "gsnet_cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "gsnet/error.hpp"

namespace gsnet::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("expected a real number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list, got '" + v + "'");
  return out;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*section, std::size_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_u64(v); },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}
template <typename T>
Field real_field(T RunConfig::*section, double T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_real(v); },
          [=](const RunConfig& c) { return fmt_real((c.*section).*member); }};
}
template <typename T>
Field bool_field(T RunConfig::*section, bool T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_bool(v); },
          [=](const RunConfig& c) { return fmt_bool((c.*section).*member); }};
}
template <typename T>
Field list_field(T RunConfig::*section, std::vector<std::size_t> T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_list(v); },
          [=](const RunConfig& c) { return fmt_list((c.*section).*member); }};
}
template <typename T>
Field u64_field(T RunConfig::*section, std::uint64_t T::*member) {
  return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_u64(v); },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

// Ordered so that serialization groups sections.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    using M = ModelConfig;
    using G = GrainGenConfig;
    using B = BuildOptions;
    using T = TrainConfig;
    auto m = &RunConfig::model;
    auto g = &RunConfig::data;
    auto b = &RunConfig::build;
    auto t = &RunConfig::train;
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("seed", Field{[](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
                                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.emplace_back("out_dir", Field{[](RunConfig& c, const std::string& v) { c.out_dir = v; },
                                    [](const RunConfig& c) { return c.out_dir; }});
    f.emplace_back("model.image_size", size_field(m, &M::image_size));
    f.emplace_back("model.in_channels", size_field(m, &M::in_channels));
    f.emplace_back("model.patch_size", size_field(m, &M::patch_size));
    f.emplace_back("model.embed_dim", size_field(m, &M::embed_dim));
    f.emplace_back("model.num_stages", size_field(m, &M::num_stages));
    f.emplace_back("model.stage_depths", list_field(m, &M::stage_depths));
    f.emplace_back("model.window_size", size_field(m, &M::window_size));
    f.emplace_back("model.num_heads", list_field(m, &M::num_heads));
    f.emplace_back("model.dense_layers", list_field(m, &M::dense_layers));
    f.emplace_back("model.growth_rates", list_field(m, &M::growth_rates));
    f.emplace_back("model.bottleneck_factor", size_field(m, &M::bottleneck_factor));
    f.emplace_back("model.num_classes", size_field(m, &M::num_classes));
    f.emplace_back("model.psnl_patch", size_field(m, &M::psnl_patch));
    f.emplace_back("model.iawca_reduction", size_field(m, &M::iawca_reduction));
    f.emplace_back("model.iawca_per_stage", bool_field(m, &M::iawca_per_stage));
    f.emplace_back("ablation.guided", bool_field(m, &M::use_guided));
    f.emplace_back("ablation.triple", bool_field(m, &M::use_triple));
    f.emplace_back("ablation.iawca", bool_field(m, &M::use_iawca));
    f.emplace_back("data.dir", Field{[](RunConfig& c, const std::string& v) { c.data_dir = v; },
                                     [](const RunConfig& c) { return c.data_dir; }});
    f.emplace_back("data.image_size", size_field(g, &G::image_size));
    f.emplace_back("data.num_levels", size_field(g, &G::num_levels));
    f.emplace_back("data.seeds_per_level", list_field(g, &G::seeds_per_level));
    f.emplace_back("data.boundary_width", real_field(g, &G::boundary_width));
    f.emplace_back("data.noise_std", real_field(g, &G::noise_std));
    f.emplace_back("data.gray_min", real_field(g, &G::gray_min));
    f.emplace_back("data.gray_max", real_field(g, &G::gray_max));
    f.emplace_back("data.rng_seed", u64_field(g, &G::rng_seed));
    f.emplace_back("data.n_per_level", size_field(b, &B::n_per_level));
    f.emplace_back("data.split", real_field(b, &B::split));
    f.emplace_back("data.crop_size", size_field(b, &B::crop_size));
    f.emplace_back("data.augment", bool_field(b, &B::augment));
    f.emplace_back("train.epochs", size_field(t, &T::epochs));
    f.emplace_back("train.batch_size", size_field(t, &T::batch_size));
    f.emplace_back("train.lr", real_field(t, &T::lr));
    f.emplace_back("train.momentum", real_field(t, &T::momentum));
    f.emplace_back("train.weight_decay", real_field(t, &T::weight_decay));
    f.emplace_back("train.lr_power", real_field(t, &T::lr_power));
    f.emplace_back("train.target_val_acc", real_field(t, &T::target_val_acc));
    f.emplace_back("train.half_level_head", bool_field(t, &T::half_level_head));
    f.emplace_back("eval.split", Field{[](RunConfig& c, const std::string& v) {
                                         if (v != "train" && v != "val") throw ConfigError("expected train or val, got '" + v + "'");
                                         c.eval_split = v;
                                       },
                                       [](const RunConfig& c) { return c.eval_split; }});
    f.emplace_back("metrics.recall", Field{[](RunConfig& c, const std::string& v) {
                                             if (v == "macro") {
                                               c.recall = RecallMode::kMacro;
                                             } else if (v == "micro") {
                                               c.recall = RecallMode::kMicro;
                                             } else {
                                               throw ConfigError("expected macro or micro, got '" + v + "'");
                                             }
                                           },
                                           [](const RunConfig& c) {
                                             return std::string(c.recall == RecallMode::kMacro ? "macro" : "micro");
                                           }});
    return f;
  }();
  return table;
}

}  // namespace

std::size_t RunConfig::expected_classes() const {
  return train.half_level_head ? 2 * data.num_levels - 1 : data.num_levels;
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  if (model.num_classes != expected_classes()) {
    throw ConfigError("model.num_classes = " + std::to_string(model.num_classes) + " but " +
                      std::to_string(data.num_levels) + " levels" +
                      (train.half_level_head ? " on a half-level head" : "") + " need " +
                      std::to_string(expected_classes()));
  }
  const std::size_t crop = build.crop_size == 0 ? data.image_size : build.crop_size;
  if (crop > data.image_size) throw ConfigError("data.crop_size exceeds data.image_size");
  if (crop != model.image_size) {
    throw ConfigError("model.image_size = " + std::to_string(model.image_size) + " but dataset images are " +
                      std::to_string(crop) + " pixels");
  }
  if (!(build.split > 0.0 && build.split < 1.0)) throw ConfigError("data.split must lie in (0,1)");
  if (build.n_per_level == 0) throw ConfigError("data.n_per_level must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0,1)");
  if (!(train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(train.lr_power >= 0.0)) throw ConfigError("train.lr_power must be >= 0");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, const Field*> index;
  for (const auto& [k, f] : fields()) index[k] = &f;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace gsnet::cli
