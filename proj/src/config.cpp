#include "zayan/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "zayan/serialize.hpp"

namespace zayan::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const double x = parse_real(key, v);
  if (x < 0 || x != std::floor(x))
    throw ConfigError("config key '" + key + "': expected a non-negative integer");
  return static_cast<std::uint64_t>(x);
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct KeyBinding {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
  auto str = [](std::string RunConfig::*field) {
    return KeyBinding{
        [field](RunConfig& c, const std::string&, const std::string& v) {
          c.*field = v;
        },
        [field](const RunConfig& c) { return c.*field; }};
  };
  auto boolean = [](bool RunConfig::*field) {
    return KeyBinding{
        [field](RunConfig& c, const std::string& k, const std::string& v) {
          c.*field = parse_bool(k, v);
        },
        [field](const RunConfig& c) { return c.*field ? "true" : "false"; }};
  };
  auto real = [](double RunConfig::*field) {
    return KeyBinding{
        [field](RunConfig& c, const std::string& k, const std::string& v) {
          c.*field = parse_real(k, v);
        },
        [field](const RunConfig& c) { return format_real(c.*field); }};
  };
  auto size = [](std::size_t RunConfig::*field) {
    return KeyBinding{
        [field](RunConfig& c, const std::string& k, const std::string& v) {
          c.*field = static_cast<std::size_t>(parse_uint(k, v));
        },
        [field](const RunConfig& c) { return std::to_string(c.*field); }};
  };

  static const std::vector<std::pair<std::string, KeyBinding>> table = {
      {"data", str(&RunConfig::data)},
      {"label", str(&RunConfig::label)},
      {"has_header", boolean(&RunConfig::has_header)},
      {"impute_missing", boolean(&RunConfig::impute_missing)},
      {"out", str(&RunConfig::out)},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.seed = parse_uint(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"threads",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.threads = static_cast<unsigned>(parse_uint(k, v));
        },
        [](const RunConfig& c) { return std::to_string(c.threads); }}},
      {"folds", size(&RunConfig::folds)},
      {"cl_lr", real(&RunConfig::cl_lr)},
      {"cl_weight_decay", real(&RunConfig::cl_weight_decay)},
      {"cl_epochs", size(&RunConfig::cl_epochs)},
      {"emb_dim", size(&RunConfig::emb_dim)},
      {"hidden_dim", size(&RunConfig::hidden_dim)},
      {"tau", real(&RunConfig::tau)},
      {"lambda", real(&RunConfig::lambda)},
      {"sigma", real(&RunConfig::sigma)},
      {"mask_prob", real(&RunConfig::mask_prob)},
      {"warp_jitter", real(&RunConfig::warp_jitter)},
      {"cl_dropout", real(&RunConfig::cl_dropout)},
      {"batch_size", size(&RunConfig::batch_size)},
      {"aug_noise", boolean(&RunConfig::aug_noise)},
      {"aug_warp", boolean(&RunConfig::aug_warp)},
      {"aug_mask", boolean(&RunConfig::aug_mask)},
      {"include_positive_in_denominator",
       boolean(&RunConfig::include_positive_in_denominator)},
      {"use_contrastive", boolean(&RunConfig::use_contrastive)},
      {"t_lr", real(&RunConfig::t_lr)},
      {"t_weight_decay", real(&RunConfig::t_weight_decay)},
      {"t_epochs", size(&RunConfig::t_epochs)},
      {"t_dropout", real(&RunConfig::t_dropout)},
      {"gamma", real(&RunConfig::gamma)},
      {"nhead", size(&RunConfig::nhead)},
      {"num_layers", size(&RunConfig::num_layers)},
      {"t_ffn_dim", size(&RunConfig::t_ffn_dim)},
      {"ce_reduction", str(&RunConfig::ce_reduction)},
      {"finetune_encoder", boolean(&RunConfig::finetune_encoder)},
      {"positional_from_z", boolean(&RunConfig::positional_from_z)},
      {"literal_frozen_tokens", boolean(&RunConfig::literal_frozen_tokens)},
      {"patience", size(&RunConfig::patience)},
  };
  return table;
}

}  // namespace

cl::PretrainConfig RunConfig::pretrain_config() const {
  cl::PretrainConfig cfg;
  cfg.epochs = cl_epochs;
  cfg.tau = tau;
  cfg.lambda = lambda;
  cfg.learning_rate = cl_lr;
  cfg.weight_decay = cl_weight_decay;
  cfg.batch_size = batch_size;
  cfg.augment.sigma = sigma;
  cfg.augment.mask_prob = mask_prob;
  cfg.augment.warp_jitter = warp_jitter;
  cfg.augment.noise_enabled = aug_noise;
  cfg.augment.warp_enabled = aug_warp;
  cfg.augment.mask_enabled = aug_mask;
  cfg.encoder.emb_dim = emb_dim;
  cfg.encoder.hidden_dim = hidden_dim;
  cfg.encoder.dropout = cl_dropout;
  cfg.seed = seed;
  cfg.include_positive_in_denominator = include_positive_in_denominator;
  cfg.use_contrastive = use_contrastive;
  return cfg;
}

zt::ZayanTConfig RunConfig::transformer_config() const {
  zt::ZayanTConfig cfg;
  cfg.num_layers = num_layers;
  cfg.nhead = nhead;
  cfg.ffn_dim = t_ffn_dim == 0 ? hidden_dim : t_ffn_dim;
  cfg.epochs = t_epochs;
  cfg.batch_size = batch_size;
  cfg.dropout = t_dropout;
  cfg.gamma = gamma;
  cfg.learning_rate = t_lr;
  cfg.weight_decay = t_weight_decay;
  cfg.finetune_encoder = finetune_encoder;
  cfg.positional_from_z = positional_from_z;
  cfg.literal_frozen_tokens = literal_frozen_tokens;
  if (ce_reduction == "mean") cfg.ce_reduction = nn::Reduction::Mean;
  else if (ce_reduction == "sum") cfg.ce_reduction = nn::Reduction::Sum;
  else throw ConfigError("config key 'ce_reduction': expected mean or sum");
  cfg.patience = patience;
  cfg.seed = seed;
  return cfg;
}

void RunConfig::validate() const {
  pretrain_config().validate();
  transformer_config().validate(emb_dim);
  if (folds < 2) throw ConfigError("config key 'folds': k must be >= 2");
  if (data.empty()) throw ConfigError("config key 'data': required");
}

unsigned RunConfig::effective_threads() const {
  return threads > 0 ? threads : default_thread_count();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "lambd") key = "lambda";  // published alias
    bool matched = false;
    for (const auto& [name, binding] : key_table()) {
      if (name == key) {
        binding.set(cfg, key, value);
        matched = true;
        break;
      }
    }
    if (!matched)
      throw ConfigError("unknown config key '" + key + "' at line " +
                        std::to_string(line_no));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  std::string k = key == "lambd" ? "lambda" : key;
  for (const auto& [name, binding] : key_table()) {
    if (name == k) {
      binding.set(cfg, k, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  for (const auto& [name, binding] : key_table())
    out << name << " = " << binding.get(c) << "\n";
  return out.str();
}

std::uint64_t config_hash(const RunConfig& c) {
  // Hash over the computational configuration only: the output location and
  // worker count do not change any result.
  RunConfig normalized = c;
  normalized.out.clear();
  normalized.threads = 0;
  return fnv1a64(serialize_config(normalized));
}

tab::Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data.rfind("synthetic:", 0) == 0) {
    std::size_t n = 200, m = 10, classes = 2, groups = 2;
    double noise = 0.05;
    std::uint64_t seed = cfg.seed;
    std::istringstream in(cfg.data.substr(10));
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw ConfigError("synthetic spec: expected key=value, got '" + item + "'");
      const std::string key = trim(item.substr(0, eq));
      const std::string value = trim(item.substr(eq + 1));
      if (key == "n") n = static_cast<std::size_t>(parse_uint(key, value));
      else if (key == "m") m = static_cast<std::size_t>(parse_uint(key, value));
      else if (key == "c") classes = static_cast<std::size_t>(parse_uint(key, value));
      else if (key == "groups") groups = static_cast<std::size_t>(parse_uint(key, value));
      else if (key == "noise") noise = parse_real(key, value);
      else if (key == "seed") seed = parse_uint(key, value);
      else throw ConfigError("synthetic spec: unknown key '" + key + "'");
    }
    return tab::make_synthetic(n, m, classes, groups, noise, seed);
  }
  tab::CsvOptions opt;
  opt.has_header = cfg.has_header;
  opt.impute_missing = cfg.impute_missing;
  return tab::load_csv(cfg.data, cfg.label, opt);
}

void RunManifest::add_artifact(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  artifact_hashes[name] = to_hex(nn::file_content_hash(path));
}

void RunManifest::add_artifact_hash(const std::string& name, std::uint64_t hash) {
  artifact_hashes[name] = to_hex(hash);
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["config_hash"] = config_hash_hex;
  j["dataset_fingerprint"] = dataset_fingerprint;
  j["tool_version"] = tool_version;
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["artifacts"] = artifact_hashes;
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

std::string utc_timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace zayan::app
