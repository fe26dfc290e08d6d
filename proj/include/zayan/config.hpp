#pragma once

#include <map>
#include <string>

#include "zayan/data.hpp"
#include "zayan/model.hpp"
#include "zayan/pretrain.hpp"

namespace zayan::app {

inline constexpr const char* kToolVersion = "0.1.0";

// Flat key=value run configuration. Keys mirror the tuned-hyperparameter
// vocabulary (cl_lr, t_lr, emb_dim, tau, lambda, sigma, mask_prob, ...) so
// published configurations transcribe directly. Unknown keys are rejected.
struct RunConfig {
  // data
  std::string data;          // CSV path or "synthetic:n=..,m=..,c=..,groups=..,noise=..,seed=.."
  std::string label = "label";
  bool has_header = true;
  bool impute_missing = false;

  // run
  std::string out = "zayan_out";
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0 = ZAYAN_THREADS env or hardware default
  std::size_t folds = 5;

  // contrastive pretraining
  double cl_lr = 1e-3;
  double cl_weight_decay = 1e-5;
  std::size_t cl_epochs = 100;
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 128;
  double tau = 0.1;
  double lambda = 1.0;
  double sigma = 0.1;
  double mask_prob = 0.15;
  double warp_jitter = 0.1;
  double cl_dropout = 0.1;
  std::size_t batch_size = 64;
  bool aug_noise = true;
  bool aug_warp = true;
  bool aug_mask = true;
  bool include_positive_in_denominator = false;
  bool use_contrastive = true;

  // transformer fine-tuning
  double t_lr = 1e-3;
  double t_weight_decay = 1e-5;
  std::size_t t_epochs = 100;
  double t_dropout = 0.1;
  double gamma = 0.5;
  std::size_t nhead = 4;
  std::size_t num_layers = 2;
  std::size_t t_ffn_dim = 0;  // 0 = use hidden_dim
  std::string ce_reduction = "mean";
  bool finetune_encoder = false;
  bool positional_from_z = false;
  bool literal_frozen_tokens = false;
  std::size_t patience = 0;

  cl::PretrainConfig pretrain_config() const;
  zt::ZayanTConfig transformer_config() const;
  void validate() const;
  unsigned effective_threads() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
// Assigns one key using the same parsing rules as the config file.
void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value);
// Canonical serialization: fixed key order, %.17g numbers; parse(serialize(c))
// reproduces c exactly.
std::string serialize_config(const RunConfig& c);
std::uint64_t config_hash(const RunConfig& c);

// Loads the dataset named by cfg.data: a CSV path, or a deterministic
// synthetic spec of the form
//   synthetic:n=400,m=12,c=3,groups=3,noise=0.05,seed=7
tab::Dataset load_dataset(const RunConfig& cfg);

struct RunManifest {
  std::string config_hash_hex;
  std::string dataset_fingerprint;
  std::string tool_version = kToolVersion;
  std::string started_utc;
  std::string finished_utc;
  std::map<std::string, std::string> artifact_hashes;  // file -> hex hash

  void add_artifact(const std::string& path);
  void add_artifact_hash(const std::string& name, std::uint64_t hash);
  void write(const std::string& path) const;
};

std::string utc_timestamp_now();

}  // namespace zayan::app
