#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "zayan/config.hpp"
#include "zayan/diagnostics.hpp"
#include "zayan/report.hpp"
#include "zayan/serialize.hpp"

using namespace zayan;

namespace {

struct Overrides {
  std::string config_path;
  std::string data;
  std::string label;
  std::string out;
  std::int64_t seed = -1;
  int threads = -1;
  std::int64_t folds = -1;
};

app::RunConfig resolve_config(const Overrides& ov) {
  app::RunConfig cfg;
  if (!ov.config_path.empty()) {
    cfg = app::load_config(ov.config_path);
  } else if (ov.data.empty()) {
    throw ConfigError("provide --config, or at least --data for defaults");
  }
  if (!ov.data.empty()) cfg.data = ov.data;
  if (!ov.label.empty()) cfg.label = ov.label;
  if (!ov.out.empty()) cfg.out = ov.out;
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.threads >= 0) cfg.threads = static_cast<unsigned>(ov.threads);
  if (ov.folds >= 0) cfg.folds = static_cast<std::size_t>(ov.folds);
  cfg.validate();
  return cfg;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory: " + dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return dir + "/" + name;
}

cl::EncoderState rebuild_encoder(const app::RunConfig& cfg, std::size_t m,
                                 nn::ParameterSet params) {
  cl::EncoderState enc;
  enc.cfg.emb_dim = cfg.emb_dim;
  enc.cfg.hidden_dim = cfg.hidden_dim;
  enc.cfg.dropout = cfg.cl_dropout;
  enc.n_features = m;
  const auto& ids = params.get("enc.feature_embed").value;
  if (ids.rows() != m || ids.cols() != cfg.emb_dim)
    throw DataError("encoder checkpoint does not match the config/dataset shape");
  enc.params = std::move(params);
  return enc;
}

nn::EmbeddingMatrixFile to_matrix_file(const cl::FeatureEmbeddingMatrix& z) {
  nn::EmbeddingMatrixFile f;
  f.d = static_cast<std::uint32_t>(z.d);
  f.m = static_cast<std::uint32_t>(z.m);
  f.colmajor = z.colmajor;
  return f;
}

cl::FeatureEmbeddingMatrix from_matrix_file(const nn::EmbeddingMatrixFile& f) {
  cl::FeatureEmbeddingMatrix z;
  z.d = f.d;
  z.m = f.m;
  z.colmajor = f.colmajor;
  return z;
}

std::vector<int> map_labels(const std::vector<std::string>& raw,
                            const std::vector<std::string>& class_names) {
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto it = std::find(class_names.begin(), class_names.end(), raw[i]);
    if (it == class_names.end())
      throw DataError("label '" + raw[i] + "' is not in the model's class set");
    out[i] = static_cast<int>(it - class_names.begin());
  }
  return out;
}

std::vector<double> pooled_embeddings(const std::vector<zt::Prediction>& preds,
                                      std::size_t m, std::size_t d) {
  (void)m;
  std::vector<double> out;
  out.reserve(preds.size() * d);
  for (const auto& p : preds)
    out.insert(out.end(), p.pooled.begin(), p.pooled.end());
  return out;
}

int cmd_pretrain(const Overrides& ov) {
  const auto cfg = resolve_config(ov);
  app::RunManifest manifest;
  manifest.started_utc = app::utc_timestamp_now();
  manifest.config_hash_hex = to_hex(app::config_hash(cfg));

  auto raw = app::load_dataset(cfg);
  std::cout << "dataset: " << tab::dataset_fingerprint(raw) << "\n";
  manifest.dataset_fingerprint = tab::dataset_fingerprint(raw);
  auto [data, scaler] = tab::standardize(raw);

  auto result = cl::pretrain(data, cfg.pretrain_config());
  ensure_out_dir(cfg.out);
  const auto enc_path = join_path(cfg.out, "encoder.znt");
  const auto z_path = join_path(cfg.out, "z.zmat");
  const auto hist_path = join_path(cfg.out, "pretrain_history.txt");
  nn::save_parameters(result.encoder.params, enc_path);
  nn::save_embedding_matrix(to_matrix_file(result.z), z_path);
  cl::save_history(result.history, hist_path);
  {
    nlohmann::json sj;
    sj["mean"] = scaler.mean;
    sj["stddev"] = scaler.stddev;
    sj["zero_variance"] =
        std::vector<int>(scaler.zero_variance.begin(), scaler.zero_variance.end());
    std::ofstream out(join_path(cfg.out, "scaler.json"));
    out << sj.dump(2) << "\n";
  }
  {
    std::ofstream out(join_path(cfg.out, "config_used.cfg"));
    out << app::serialize_config(cfg);
  }
  manifest.add_artifact(enc_path);
  manifest.add_artifact(z_path);
  manifest.add_artifact(hist_path);
  manifest.finished_utc = app::utc_timestamp_now();
  manifest.write(join_path(cfg.out, "run_manifest.json"));

  std::cout << "pretrained encoder over " << result.z.m
            << " features; Z is " << result.z.d << "x" << result.z.m << "\n";
  const auto& last = result.history.epochs.back();
  std::printf("final epoch: infonce=%.5f redundancy=%.5f mi_bound=%.5f\n",
              last.infonce, last.redundancy, last.mi_bound);
  return 0;
}

zt::ModelBundle train_full_model(const app::RunConfig& cfg,
                                 const std::string& pretrained_dir,
                                 tab::Dataset& raw_out,
                                 zt::FinetuneHistory& history_out) {
  auto raw = app::load_dataset(cfg);
  std::cout << "dataset: " << tab::dataset_fingerprint(raw) << "\n";
  auto [data, scaler] = tab::standardize(raw);

  cl::EncoderState encoder;
  cl::FeatureEmbeddingMatrix z;
  if (!pretrained_dir.empty()) {
    encoder = rebuild_encoder(
        cfg, data.n_features,
        nn::load_parameters(join_path(pretrained_dir, "encoder.znt")));
    z = from_matrix_file(
        nn::load_embedding_matrix(join_path(pretrained_dir, "z.zmat")));
  } else {
    auto result = cl::pretrain(data, cfg.pretrain_config());
    encoder = std::move(result.encoder);
    z = std::move(result.z);
  }

  auto [state, history] =
      zt::finetune(data, std::move(encoder), std::move(z), cfg.transformer_config());
  history_out = std::move(history);

  zt::ModelBundle bundle;
  bundle.state = std::move(state);
  bundle.scaler = std::move(scaler);
  bundle.feature_names = raw.feature_names;
  bundle.class_names = raw.class_names;
  bundle.config_hash = to_hex(app::config_hash(cfg));
  bundle.tool_version = app::kToolVersion;
  raw_out = std::move(raw);
  return bundle;
}

int cmd_finetune(const Overrides& ov, const std::string& pretrained_dir) {
  const auto cfg = resolve_config(ov);
  app::RunManifest manifest;
  manifest.started_utc = app::utc_timestamp_now();
  manifest.config_hash_hex = to_hex(app::config_hash(cfg));

  tab::Dataset raw;
  zt::FinetuneHistory history;
  auto bundle = train_full_model(cfg, pretrained_dir, raw, history);
  manifest.dataset_fingerprint = tab::dataset_fingerprint(raw);

  ensure_out_dir(cfg.out);
  const auto model_path = join_path(cfg.out, "model.zmdl");
  zt::save_model(bundle, model_path);
  {
    std::ofstream out(join_path(cfg.out, "finetune_history.txt"));
    for (const auto& r : history.epochs) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "epoch=%zu cross_entropy=%.17g preservation=%.17g "
                    "train_accuracy=%.17g\n",
                    r.epoch, r.cross_entropy, r.preservation, r.train_accuracy);
      out << buf;
    }
  }
  manifest.add_artifact(model_path);
  manifest.add_artifact(join_path(cfg.out, "finetune_history.txt"));
  manifest.finished_utc = app::utc_timestamp_now();
  manifest.write(join_path(cfg.out, "run_manifest.json"));
  std::printf("final train accuracy: %.4f over %zu epochs\n",
              history.epochs.back().train_accuracy, history.epochs.size());
  return 0;
}

struct DiagnosticSelection {
  bool all = false;
  bool ece = false;
  bool selective = false;
  bool topk = false;
  bool robustness = false;
  bool sanity = false;
  bool ood = false;
  bool sensitivity = false;
  bool triage = false;
  bool importance = false;
  bool geometry = false;
  bool tta = false;
  std::string topk_list = "1,2,3";
  std::size_t ece_bins = 10;
  double sensitivity_eps = 0.1;
  std::size_t sensitivity_dirs = 8;
  int triage_positive = 0;
  std::size_t tta_votes = 5;

  bool any() const {
    return all || ece || selective || topk || robustness || sanity || ood ||
           sensitivity || triage || importance || geometry || tta;
  }
};

std::vector<std::size_t> parse_topk_list(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    ks.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (ks.empty()) throw ConfigError("--topk: expected a comma-separated list");
  return ks;
}

// Model-level diagnostic battery on held-out rows; sections appear iff
// selected.
void run_model_diagnostics(app::ReportBuilder& report, zt::ZayanTState& model,
                           const zt::RowMatrix& rows,
                           const std::vector<int>& labels,
                           const std::vector<std::string>& feature_names,
                           const DiagnosticSelection& sel, std::uint64_t seed) {
  const auto preds = zt::predict_batch(rows, model);
  const auto probs = diag::Probs::from_predictions(preds.items);
  report.set_latency(preds.latency);

  if (sel.all || sel.ece)
    report.add_calibration(
        diag::expected_calibration_error(probs, labels, sel.ece_bins),
        sel.ece_bins);
  if (sel.all || sel.selective) {
    std::vector<double> thresholds;
    for (int t = 0; t <= 19; ++t) thresholds.push_back(0.05 * t);
    report.add_selective(diag::selective_prediction_curve(probs, labels, thresholds));
  }
  if (sel.all || sel.topk) {
    auto ks = parse_topk_list(sel.topk_list);
    for (auto& k : ks) k = std::min(k, probs.classes);
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    report.add_margins_topk(diag::margin_topk(probs, labels, ks));
  }
  if (sel.all || sel.robustness) {
    const std::vector<double> fractions{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
    report.add_robustness(diag::robustness_sweep(model, rows, labels, fractions,
                                                 diag::PerturbMode::Shuffle, seed),
                          "shuffle", seed);
    report.add_robustness(diag::robustness_sweep(model, rows, labels, fractions,
                                                 diag::PerturbMode::Drop, seed),
                          "drop", seed);
  }
  if (sel.all || sel.sanity)
    report.add_sanity(diag::sanity_modes(model, rows, labels, seed), seed);
  if (sel.all || sel.ood)
    report.add_ood(diag::ood_confidence_report(model, rows, seed), seed);
  if (sel.all || sel.sensitivity)
    report.add_sensitivity(
        diag::local_sensitivity(model, rows, sel.sensitivity_eps,
                                sel.sensitivity_dirs, seed),
        seed);
  if (sel.all || sel.triage) {
    bool pos_seen = false, neg_seen = false;
    for (int y : labels) (y == sel.triage_positive ? pos_seen : neg_seen) = true;
    if (pos_seen && neg_seen) {
      report.add_triage(diag::triage_metrics(probs, labels, sel.triage_positive),
                        sel.triage_positive);
    } else {
      report.add_note("triage", "skipped",
                      "positive class absent or universal in these labels");
    }
  }
  if (sel.all || sel.importance)
    report.add_importance(
        diag::permutation_importance(model, rows, labels, feature_names, seed),
        seed);
  if (sel.all || sel.geometry) {
    report.add_feature_geometry(diag::feature_embedding_geometry(model.z));
    const auto pooled = pooled_embeddings(preds.items, model.m, model.d);
    report.add_sample_geometry(
        diag::sample_embedding_geometry(pooled, rows.n, model.d, labels,
                                        {1, 3, 5, 10, 20}),
        rows.n, model.d);
  }
  if (sel.all || sel.tta) {
    aug::AugmentConfig acfg;  // diagnostic-time augmentations, library defaults
    report.add_tta(
        diag::tta_consistency(model, rows, labels, acfg, sel.tta_votes, seed),
        seed);
  }
}

int cmd_cv(const Overrides& ov, const DiagnosticSelection& sel) {
  const auto cfg = resolve_config(ov);
  app::RunManifest manifest;
  manifest.started_utc = app::utc_timestamp_now();
  manifest.config_hash_hex = to_hex(app::config_hash(cfg));

  auto raw = app::load_dataset(cfg);
  std::cout << "dataset: " << tab::dataset_fingerprint(raw) << "\n";
  manifest.dataset_fingerprint = tab::dataset_fingerprint(raw);

  Stopwatch watch;
  auto cv = diag::cross_validate(raw, cfg.pretrain_config(),
                                 cfg.transformer_config(), cfg.folds, cfg.seed,
                                 cfg.effective_threads());
  const double seconds = watch.seconds();

  std::printf("CV accuracy: %.2f±%.2f (k=%zu)\n", cv.result.mean_accuracy * 100.0,
              cv.result.std_accuracy * 100.0, cfg.folds);

  app::ReportBuilder report;
  report.set_run_meta(cfg.seed, manifest.config_hash_hex,
                      manifest.dataset_fingerprint);
  report.set_wall_clock_seconds(seconds);
  report.add_cv(cv.result, cfg.folds, cfg.seed);
  report.set_latency(cv.final_latency);
  // pooled out-of-fold calibration is always part of the cv report
  report.add_calibration(
      diag::expected_calibration_error(cv.pooled_probs, cv.pooled_labels, 10), 10);

  if (sel.any()) {
    cv.final_model.config_hash = manifest.config_hash_hex;
    cv.final_model.tool_version = app::kToolVersion;
    run_model_diagnostics(report, cv.final_model.state, cv.final_test_rows,
                          cv.final_test_labels, raw.feature_names, sel, cfg.seed);
  }

  ensure_out_dir(cfg.out);
  report.write(cfg.out);
  const auto model_path = join_path(cfg.out, "model.zmdl");
  cv.final_model.config_hash = manifest.config_hash_hex;
  cv.final_model.tool_version = app::kToolVersion;
  zt::save_model(cv.final_model, model_path);
  manifest.add_artifact(model_path);
  manifest.add_artifact_hash("report.json(canonical)", report.content_hash());
  manifest.finished_utc = app::utc_timestamp_now();
  manifest.write(join_path(cfg.out, "run_manifest.json"));
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& label, bool has_header,
                const std::string& out_path) {
  auto bundle = zt::load_model(model_path);
  const auto table = tab::load_feature_csv(data_path, has_header, label);
  if (table.n_cols != bundle.scaler.mean.size())
    throw DataError("feature count " + std::to_string(table.n_cols) +
                    " does not match the model's " +
                    std::to_string(bundle.scaler.mean.size()));
  zt::RowMatrix rows;
  rows.n = table.n_rows;
  rows.m = table.n_cols;
  rows.x = table.x;
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c)
      rows.at(r, c) =
          (rows.at(r, c) - bundle.scaler.mean[c]) / bundle.scaler.stddev[c];

  const auto preds = zt::predict_batch(rows, bundle.state);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot open for writing: " + out_path);
  out << "predicted_label,confidence";
  for (const auto& name : bundle.class_names) out << ",prob_" << name;
  out << "\n";
  char buf[64];
  for (const auto& p : preds.items) {
    out << bundle.class_names[static_cast<std::size_t>(p.predicted_class)];
    const double conf =
        *std::max_element(p.probabilities.begin(), p.probabilities.end());
    std::snprintf(buf, sizeof(buf), "%.6f", conf);
    out << "," << buf;
    for (double v : p.probabilities) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    }
    out << "\n";
  }
  std::printf("wrote %zu predictions to %s\n", preds.items.size(),
              out_path.c_str());
  if (!table.raw_labels.empty()) {
    const auto labels = map_labels(table.raw_labels, bundle.class_names);
    std::vector<int> hat(preds.items.size());
    for (std::size_t i = 0; i < hat.size(); ++i)
      hat[i] = preds.items[i].predicted_class;
    std::printf("accuracy against '%s' column: %.4f\n", label.c_str(),
                diag::accuracy_of(hat, labels));
  }
  return 0;
}

int cmd_diagnose(const std::string& model_path, const Overrides& ov,
                 bool has_header, const DiagnosticSelection& sel) {
  if (!sel.any())
    throw ConfigError("select at least one diagnostic (--all for everything)");
  auto bundle = zt::load_model(model_path);
  if (ov.data.empty()) throw ConfigError("--data is required");
  const std::string label = ov.label.empty() ? "label" : ov.label;
  const auto table = tab::load_feature_csv(ov.data, has_header, label);
  if (table.raw_labels.empty())
    throw DataError("diagnose needs the label column '" + label + "'");
  if (table.n_cols != bundle.scaler.mean.size())
    throw DataError("feature count does not match the model");
  const auto labels = map_labels(table.raw_labels, bundle.class_names);

  zt::RowMatrix rows;
  rows.n = table.n_rows;
  rows.m = table.n_cols;
  rows.x = table.x;
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c)
      rows.at(r, c) =
          (rows.at(r, c) - bundle.scaler.mean[c]) / bundle.scaler.stddev[c];

  const std::uint64_t seed = ov.seed >= 0 ? static_cast<std::uint64_t>(ov.seed) : 42;
  app::ReportBuilder report;
  std::ostringstream fp;
  fp << "N=" << rows.n << " m=" << rows.m << " C=" << bundle.class_names.size();
  report.set_run_meta(seed, bundle.config_hash, fp.str());
  Stopwatch watch;
  run_model_diagnostics(report, bundle.state, rows, labels, bundle.feature_names,
                        sel, seed);
  report.set_wall_clock_seconds(watch.seconds());

  const std::string out_dir = ov.out.empty() ? "zayan_diagnostics" : ov.out;
  ensure_out_dir(out_dir);
  report.write(out_dir);
  std::printf("wrote diagnostics report to %s/report.json\n", out_dir.c_str());
  return 0;
}

struct SearchDimension {
  std::string key;
  std::string kind;  // uniform | loguniform | int | choice
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> choices;
};

std::vector<SearchDimension> load_search_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open search space: " + path);
  std::vector<SearchDimension> dims;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    SearchDimension dim;
    if (!(ss >> dim.key)) continue;
    if (!(ss >> dim.kind))
      throw ConfigError("search space line " + std::to_string(line_no) +
                        ": expected '<key> <kind> ...'");
    if (dim.kind == "uniform" || dim.kind == "loguniform" || dim.kind == "int") {
      if (!(ss >> dim.lo >> dim.hi) || !(dim.lo <= dim.hi))
        throw ConfigError("search space line " + std::to_string(line_no) +
                          ": expected a valid 'lo hi' range");
      if (dim.kind == "loguniform" && !(dim.lo > 0.0))
        throw ConfigError("search space line " + std::to_string(line_no) +
                          ": loguniform needs lo > 0");
    } else if (dim.kind == "choice") {
      std::string v;
      while (ss >> v) dim.choices.push_back(v);
      if (dim.choices.empty())
        throw ConfigError("search space line " + std::to_string(line_no) +
                          ": choice needs at least one value");
    } else {
      throw ConfigError("search space line " + std::to_string(line_no) +
                        ": unknown kind '" + dim.kind + "'");
    }
    dims.push_back(std::move(dim));
  }
  if (dims.empty()) throw ConfigError("search space is empty");
  return dims;
}

int cmd_search(const Overrides& ov, const std::string& space_path,
               std::size_t trials) {
  const auto base = resolve_config(ov);
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  const auto dims = load_search_space(space_path);
  auto raw = app::load_dataset(base);
  std::cout << "dataset: " << tab::dataset_fingerprint(raw) << "\n";

  struct Trial {
    std::size_t index = 0;
    app::RunConfig cfg;
    std::map<std::string, std::string> sampled;
    double objective = 0.0;
    double duration_s = 0.0;
  };
  std::vector<Trial> log(trials);

  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng = derive_stream(base.seed, 0x73726368ull, t);
    Trial trial;
    trial.index = t;
    trial.cfg = base;
    for (const auto& dim : dims) {
      std::string value;
      if (dim.kind == "uniform") {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", rng.uniform(dim.lo, dim.hi));
        value = buf;
      } else if (dim.kind == "loguniform") {
        char buf[64];
        const double x =
            std::exp(rng.uniform(std::log(dim.lo), std::log(dim.hi)));
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        value = buf;
      } else if (dim.kind == "int") {
        const auto lo = static_cast<long long>(dim.lo);
        const auto hi = static_cast<long long>(dim.hi);
        value = std::to_string(
            lo + static_cast<long long>(rng.uniform_index(
                     static_cast<std::size_t>(hi - lo + 1))));
      } else {
        value = dim.choices[rng.uniform_index(dim.choices.size())];
      }
      app::set_config_key(trial.cfg, dim.key, value);
      trial.sampled[dim.key] = value;
    }
    trial.cfg.validate();
    log[t] = std::move(trial);
  }

  parallel_for(trials, base.effective_threads(), [&](std::size_t t) {
    Stopwatch watch;
    const auto cv = diag::cross_validate(raw, log[t].cfg.pretrain_config(),
                                         log[t].cfg.transformer_config(),
                                         log[t].cfg.folds, log[t].cfg.seed, 1);
    log[t].objective = cv.result.mean_accuracy;
    log[t].duration_s = watch.seconds();
  });

  std::size_t best = 0;
  for (std::size_t t = 1; t < trials; ++t)
    if (log[t].objective > log[best].objective) best = t;

  ensure_out_dir(base.out);
  {
    std::ofstream out(join_path(base.out, "trials.csv"));
    out << "trial,objective,duration_s";
    for (const auto& dim : dims) out << "," << dim.key;
    out << "\n";
    for (const auto& trial : log) {
      out << trial.index << "," << trial.objective << "," << trial.duration_s;
      for (const auto& dim : dims) out << "," << trial.sampled.at(dim.key);
      out << "\n";
    }
  }
  {
    std::ofstream out(join_path(base.out, "best_config.cfg"));
    out << app::serialize_config(log[best].cfg);
  }
  {
    auto summary = [&](auto field) {
      std::vector<double> v;
      for (const auto& trial : log) v.push_back(field(trial));
      std::sort(v.begin(), v.end());
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      const double median = v.size() % 2 ? v[v.size() / 2]
                                         : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
      return nlohmann::json{{"min", v.front()},
                            {"mean", mean},
                            {"median", median},
                            {"max", v.back()}};
    };
    nlohmann::json j;
    j["trials"] = trials;
    j["objective"] = summary([](const Trial& t) { return t.objective; });
    j["duration_s"] = summary([](const Trial& t) { return t.duration_s; });
    j["best_trial"] = best;
    j["best_objective"] = log[best].objective;
    std::ofstream out(join_path(base.out, "search.json"));
    out << j.dump(2) << "\n";
  }
  std::printf("best trial %zu: objective %.4f\n", best, log[best].objective);
  return 0;
}

int cmd_turing_export(const std::string& model_path, const Overrides& ov,
                      bool has_header, std::size_t n_max,
                      const std::string& sheet_path) {
  auto bundle = zt::load_model(model_path);
  const std::string label = ov.label.empty() ? "label" : ov.label;
  const auto table = tab::load_feature_csv(ov.data, has_header, label);
  if (table.raw_labels.empty())
    throw DataError("turing-export needs the label column '" + label + "'");
  const auto labels = map_labels(table.raw_labels, bundle.class_names);
  zt::RowMatrix rows;
  rows.n = table.n_rows;
  rows.m = table.n_cols;
  rows.x = table.x;
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c)
      rows.at(r, c) =
          (rows.at(r, c) - bundle.scaler.mean[c]) / bundle.scaler.stddev[c];
  const std::uint64_t seed = ov.seed >= 0 ? static_cast<std::uint64_t>(ov.seed) : 42;
  const auto exp = diag::export_turing_sheet(bundle.state, rows, labels,
                                             bundle.feature_names,
                                             bundle.class_names, n_max, seed,
                                             sheet_path);
  std::printf("exported %zu rows to %s (model accuracy on subset: %.4f)\n",
              exp.indices.size(), sheet_path.c_str(), exp.model_accuracy);
  return 0;
}

int cmd_turing_score(const std::string& sheet_path) {
  const auto score = diag::score_turing_sheet(sheet_path);
  nlohmann::json j;
  j["rows"] = score.n;
  j["filled"] = score.n_filled;
  j["model_accuracy"] = score.model_accuracy;
  if (score.n_filled > 0) {
    j["human_accuracy"] = score.human_accuracy;
    j["human_model_agreement"] = score.human_model_agreement;
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"zayan: feature-level contrastive pretraining and transformer "
               "classification for tabular data"};
  cli.require_subcommand(1);

  Overrides ov;
  cli.add_option("--config", ov.config_path, "run configuration file");
  cli.add_option("--data", ov.data, "dataset CSV path or synthetic: spec");
  cli.add_option("--label", ov.label, "label column name or 0-based index");
  cli.add_option("--out", ov.out, "output directory");
  cli.add_option("--seed", ov.seed, "master random seed");
  cli.add_option("--threads", ov.threads,
                 "worker threads (default: ZAYAN_THREADS or hardware)");
  cli.add_option("--folds", ov.folds, "cross-validation fold count (k >= 2)");

  auto* sub_pretrain =
      cli.add_subcommand("pretrain", "contrastive feature pretraining");
  std::string pretrained_dir;
  auto* sub_finetune =
      cli.add_subcommand("finetune", "train the transformer classifier");
  sub_finetune->add_option("--pretrained", pretrained_dir,
                           "directory with encoder.znt and z.zmat");
  DiagnosticSelection sel;
  auto add_selection = [&sel](CLI::App* sub) {
    sub->add_flag("--all", sel.all, "run every diagnostic");
    sub->add_flag("--ece", sel.ece, "calibration bins and ECE");
    sub->add_option("--ece-bins", sel.ece_bins, "ECE bin count")->capture_default_str();
    sub->add_flag("--selective", sel.selective, "confidence/coverage curve");
    sub->add_flag("--topk", sel.topk, "margins and top-k accuracy");
    sub->add_option("--topk-list", sel.topk_list, "comma-separated k values")
        ->capture_default_str();
    sub->add_flag("--robustness", sel.robustness, "feature perturbation sweeps");
    sub->add_flag("--sanity", sel.sanity, "signal sanity and stress modes");
    sub->add_flag("--ood", sel.ood, "confidence/entropy under synthetic OOD");
    sub->add_flag("--sensitivity", sel.sensitivity, "local logit sensitivity");
    sub->add_option("--sensitivity-eps", sel.sensitivity_eps, "perturbation radius")
        ->capture_default_str();
    sub->add_flag("--triage", sel.triage, "one-vs-rest ROC and operating point");
    sub->add_option("--positive-class", sel.triage_positive,
                    "triage positive class id")
        ->capture_default_str();
    sub->add_flag("--importance", sel.importance, "permutation importance");
    sub->add_flag("--geometry", sel.geometry, "embedding spectra and kNN");
    sub->add_flag("--tta", sel.tta, "test-time augmentation consistency");
    sub->add_option("--tta-votes", sel.tta_votes, "TTA vote count (odd)")
        ->capture_default_str();
  };
  auto* sub_cv = cli.add_subcommand("cv", "k-fold cross-validation pipeline");
  add_selection(sub_cv);

  std::string model_path, out_csv = "predictions.csv", sheet_path = "turing_sheet.csv";
  bool no_header = false;
  auto* sub_predict = cli.add_subcommand("predict", "predict a feature CSV");
  sub_predict->add_option("--model", model_path, "model bundle (.zmdl)")->required();
  sub_predict->add_flag("--no-header", no_header, "CSV has no header row");
  sub_predict->add_option("--out-csv", out_csv, "output CSV path")
      ->capture_default_str();

  auto* sub_diagnose =
      cli.add_subcommand("diagnose", "inference-time diagnostics for a model");
  sub_diagnose->add_option("--model", model_path, "model bundle (.zmdl)");
  sub_diagnose->add_flag("--no-header", no_header, "CSV has no header row");
  add_selection(sub_diagnose);

  std::string space_path;
  std::size_t trials = 10;
  auto* sub_search = cli.add_subcommand("search", "naive random hyperparameter search");
  sub_search->add_option("--space", space_path, "search space file")->required();
  sub_search->add_option("--trials", trials, "number of trials")->capture_default_str();

  std::size_t n_max = 60;
  auto* sub_texport =
      cli.add_subcommand("turing-export", "export a human-vs-model answer sheet");
  sub_texport->add_option("--model", model_path, "model bundle (.zmdl)");
  sub_texport->add_option("--n-max", n_max, "maximum rows to sample")
      ->capture_default_str();
  sub_texport->add_option("--sheet", sheet_path, "output sheet path")
      ->capture_default_str();
  sub_texport->add_flag("--no-header", no_header, "CSV has no header row");

  auto* sub_tscore =
      cli.add_subcommand("turing-score", "score a filled answer sheet");
  sub_tscore->add_option("--sheet", sheet_path, "filled sheet path")->required();

  for (auto* sub : {sub_pretrain, sub_finetune, sub_cv, sub_predict, sub_diagnose,
                    sub_search, sub_texport, sub_tscore})
    sub->fallthrough();

  try {
    cli.parse(argc, argv);
    if (sub_pretrain->parsed()) return cmd_pretrain(ov);
    if (sub_finetune->parsed()) return cmd_finetune(ov, pretrained_dir);
    if (sub_cv->parsed()) return cmd_cv(ov, sel);
    if (sub_predict->parsed())
      return cmd_predict(model_path, ov.data, ov.label, !no_header, out_csv);
    if (sub_diagnose->parsed()) {
      if (model_path.empty()) throw ConfigError("--model is required");
      return cmd_diagnose(model_path, ov, !no_header, sel);
    }
    if (sub_search->parsed()) return cmd_search(ov, space_path, trials);
    if (sub_texport->parsed()) {
      if (model_path.empty()) throw ConfigError("--model is required");
      return cmd_turing_export(model_path, ov, !no_header, n_max, sheet_path);
    }
    if (sub_tscore->parsed()) return cmd_turing_score(sheet_path);
    throw ConfigError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    return cli.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "config"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "data"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "numeric"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error",
                                 {{"type", "internal"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  }
}
