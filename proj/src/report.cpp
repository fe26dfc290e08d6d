#include "zayan/report.hpp"

#include <filesystem>
#include <fstream>

#include "zayan/config.hpp"

namespace zayan::app {

namespace {

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << header << "\n";
  char buf[64];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace

ReportBuilder::ReportBuilder() {
  root_["report"] = "zayan_diagnostics";
  root_["schema_version"] = 1;
}

void ReportBuilder::set_run_meta(std::uint64_t seed,
                                 const std::string& config_hash_hex,
                                 const std::string& dataset_fingerprint) {
  root_["run"]["seed"] = seed;
  root_["run"]["config_hash"] = config_hash_hex;
  root_["run"]["dataset"] = dataset_fingerprint;
  root_["run"]["tool_version"] = kToolVersion;
}

void ReportBuilder::set_wall_clock_seconds(double seconds) {
  root_["timing"]["wall_clock_seconds"] = seconds;
}

void ReportBuilder::set_latency(const zt::LatencyStats& latency) {
  auto& j = root_["timing"]["predict_latency"];
  j["batch_size"] = latency.batch_size;
  j["batches"] = latency.batches;
  j["mean_ms"] = latency.mean_ms;
  j["p50_ms"] = latency.p50_ms;
  j["p90_ms"] = latency.p90_ms;
  j["p99_ms"] = latency.p99_ms;
}

void ReportBuilder::add_cv(const diag::CVResult& cv, std::size_t k,
                           std::uint64_t seed) {
  auto& j = root_["cv"];
  j["operation"] = "cross_validate";
  j["params"] = {{"k", k}, {"seed", seed}};
  j["fold_accuracies"] = cv.fold_accuracies;
  j["mean_accuracy"] = cv.mean_accuracy;
  j["std_accuracy"] = cv.std_accuracy;
  j["fold_confusions"] = cv.fold_confusions;
  char line[64];
  std::snprintf(line, sizeof(line), "%.2f±%.2f", cv.mean_accuracy * 100.0,
                cv.std_accuracy * 100.0);
  j["summary"] = line;
}

void ReportBuilder::add_calibration(const diag::ReliabilityBins& bins,
                                    std::size_t n_bins) {
  auto& j = root_["calibration"];
  j["operation"] = "expected_calibration_error";
  j["params"] = {{"n_bins", n_bins}};
  j["ece"] = bins.ece;
  j["edges"] = bins.edges;
  j["count"] = bins.count;
  j["mean_confidence"] = bins.mean_confidence;
  j["accuracy"] = bins.accuracy;
}

void ReportBuilder::add_selective(const std::vector<diag::SelectivePoint>& curve) {
  auto& j = root_["selective_prediction"];
  j["operation"] = "selective_prediction_curve";
  j["points"] = nlohmann::json::array();
  for (const auto& p : curve) {
    nlohmann::json point;
    point["threshold"] = p.threshold;
    point["coverage"] = p.coverage;
    if (p.accuracy.has_value()) point["accuracy"] = *p.accuracy;
    else point["accuracy"] = nullptr;
    j["points"].push_back(point);
  }
}

void ReportBuilder::add_margins_topk(const diag::MarginTopk& mk) {
  auto& j = root_["margins_topk"];
  j["operation"] = "margin_topk";
  j["mean_margin_correct"] = mk.mean_margin_correct;
  j["mean_margin_incorrect"] = mk.mean_margin_incorrect;
  j["topk"] = nlohmann::json::array();
  for (const auto& [k, acc] : mk.topk_accuracy)
    j["topk"].push_back({{"k", k}, {"accuracy", acc}});
}

void ReportBuilder::add_robustness(const std::vector<diag::RobustnessPoint>& sweep,
                                   const std::string& mode, std::uint64_t seed) {
  auto& j = root_["robustness_" + mode];
  j["operation"] = "robustness_sweep";
  j["params"] = {{"mode", mode}, {"seed", seed}};
  j["points"] = nlohmann::json::array();
  for (const auto& p : sweep)
    j["points"].push_back({{"fraction", p.fraction},
                           {"n_perturbed", p.n_perturbed},
                           {"accuracy", p.accuracy}});
}

void ReportBuilder::add_sanity(const diag::SanityModes& modes, std::uint64_t seed) {
  auto& j = root_["sanity_modes"];
  j["operation"] = "sanity_modes";
  j["params"] = {{"seed", seed}, {"heavy_noise_sigma", modes.heavy_noise_sigma}};
  j["full"] = modes.full;
  j["zero"] = modes.zero;
  j["mean"] = modes.mean;
  j["shuffle_rows"] = modes.shuffle_rows;
  j["heavy_noise"] = modes.heavy_noise;
}

void ReportBuilder::add_ood(const std::vector<diag::OodRegime>& regimes,
                            std::uint64_t seed) {
  auto& j = root_["ood_confidence"];
  j["operation"] = "ood_confidence_report";
  j["params"] = {{"seed", seed}};
  j["regimes"] = nlohmann::json::array();
  for (const auto& r : regimes)
    j["regimes"].push_back({{"regime", r.name},
                            {"mean_max_confidence", r.mean_max_confidence},
                            {"mean_entropy", r.mean_entropy}});
}

void ReportBuilder::add_sensitivity(const diag::SensitivityReport& s,
                                    std::uint64_t seed) {
  auto& j = root_["local_sensitivity"];
  j["operation"] = "local_sensitivity";
  j["params"] = {{"eps", s.eps}, {"n_directions", s.n_directions}, {"seed", seed}};
  j["mean"] = s.mean;
  j["median"] = s.median;
}

void ReportBuilder::add_triage(const diag::TriageMetrics& t, int positive_class) {
  auto& j = root_["triage"];
  j["operation"] = "triage_metrics";
  j["params"] = {{"positive_class", positive_class}};
  j["auc"] = t.auc;
  j["best_threshold"] = t.best_threshold;
  j["sensitivity"] = t.sensitivity;
  j["specificity"] = t.specificity;
  j["accuracy"] = t.accuracy;
  j["precision"] = t.precision;
  j["recall"] = t.recall;
}

void ReportBuilder::add_importance(const std::vector<diag::ImportanceEntry>& ranking,
                                   std::uint64_t seed) {
  auto& j = root_["permutation_importance"];
  j["operation"] = "permutation_importance";
  j["params"] = {{"seed", seed}};
  j["ranking"] = nlohmann::json::array();
  for (const auto& e : ranking)
    j["ranking"].push_back({{"feature", e.feature},
                            {"name", e.name},
                            {"accuracy_drop_points", e.accuracy_drop}});
}

void ReportBuilder::add_feature_geometry(const diag::EmbeddingGeometry& g) {
  auto& j = root_["feature_embedding_geometry"];
  j["operation"] = "embedding_geometry";
  j["gram_offdiag_mean"] = g.offdiag_mean;
  j["gram_offdiag_abs_mean"] = g.offdiag_abs_mean;
  j["eigenvalues"] = g.eigenvalues;
  j["participation_ratio"] = g.participation_ratio;
  j["components_for_variance"] = nlohmann::json::array();
  for (const auto& [target, k] : g.components_for_variance)
    j["components_for_variance"].push_back({{"target", target}, {"k", k}});
}

void ReportBuilder::add_sample_geometry(const diag::EmbeddingGeometry& g,
                                        std::size_t n, std::size_t d) {
  auto& j = root_["sample_embedding_geometry"];
  j["operation"] = "embedding_geometry";
  j["params"] = {{"n", n}, {"d", d}};
  j["eigenvalues"] = g.eigenvalues;
  j["participation_ratio"] = g.participation_ratio;
  j["components_for_variance"] = nlohmann::json::array();
  for (const auto& [target, k] : g.components_for_variance)
    j["components_for_variance"].push_back({{"target", target}, {"k", k}});
  j["loo_knn"] = nlohmann::json::array();
  for (const auto& [k, acc] : g.loo_knn_accuracy)
    j["loo_knn"].push_back({{"k", k}, {"accuracy", acc}});
}

void ReportBuilder::add_tta(const diag::TtaReport& t, std::uint64_t seed) {
  auto& j = root_["tta_consistency"];
  j["operation"] = "tta_consistency";
  j["params"] = {{"votes", t.votes}, {"seed", seed}};
  j["clean_accuracy"] = t.clean_accuracy;
  j["tta_accuracy"] = t.tta_accuracy;
  j["change_fraction"] = t.change_fraction;
}

void ReportBuilder::add_note(const std::string& key, const std::string& status,
                             const std::string& text) {
  root_["notes"][key] = {{"status", status}, {"text", text}};
}

bool ReportBuilder::has_section(const std::string& name) const {
  return root_.contains(name);
}

std::string ReportBuilder::canonical_dump() const {
  nlohmann::json copy = root_;
  copy.erase("timing");
  return copy.dump();
}

std::uint64_t ReportBuilder::content_hash() const {
  return fnv1a64(canonical_dump());
}

void ReportBuilder::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = [&](const std::string& name) { return dir + "/" + name; };
  {
    std::ofstream out(path("report.json"));
    if (!out) throw DataError("cannot open for writing: " + path("report.json"));
    out << root_.dump(2) << "\n";
  }
  if (root_.contains("calibration")) {
    const auto& c = root_["calibration"];
    std::vector<std::vector<double>> rows;
    for (std::size_t b = 0; b < c["count"].size(); ++b)
      rows.push_back({c["edges"][b].get<double>(), c["edges"][b + 1].get<double>(),
                      static_cast<double>(c["count"][b].get<std::size_t>()),
                      c["mean_confidence"][b].get<double>(),
                      c["accuracy"][b].get<double>()});
    write_csv(path("reliability_bins.csv"),
              "bin_lo,bin_hi,count,mean_confidence,accuracy", rows);
  }
  if (root_.contains("selective_prediction")) {
    std::vector<std::vector<double>> rows;
    for (const auto& p : root_["selective_prediction"]["points"])
      rows.push_back({p["threshold"].get<double>(), p["coverage"].get<double>(),
                      p["accuracy"].is_null() ? -1.0 : p["accuracy"].get<double>()});
    write_csv(path("selective_prediction.csv"),
              "threshold,coverage,accuracy_or_minus1", rows);
  }
  for (const char* mode : {"shuffle", "drop"}) {
    const std::string key = std::string("robustness_") + mode;
    if (!root_.contains(key)) continue;
    std::vector<std::vector<double>> rows;
    for (const auto& p : root_[key]["points"])
      rows.push_back({p["fraction"].get<double>(),
                      static_cast<double>(p["n_perturbed"].get<std::size_t>()),
                      p["accuracy"].get<double>()});
    write_csv(path(key + ".csv"), "fraction,n_perturbed,accuracy", rows);
  }
  if (root_.contains("permutation_importance")) {
    std::vector<std::vector<double>> rows;
    for (const auto& e : root_["permutation_importance"]["ranking"])
      rows.push_back({static_cast<double>(e["feature"].get<std::size_t>()),
                      e["accuracy_drop_points"].get<double>()});
    write_csv(path("permutation_importance.csv"), "feature,accuracy_drop_points",
              rows);
  }
  for (const char* key : {"feature_embedding_geometry", "sample_embedding_geometry"}) {
    if (!root_.contains(key)) continue;
    std::vector<std::vector<double>> rows;
    std::size_t i = 0;
    for (const auto& ev : root_[key]["eigenvalues"])
      rows.push_back({static_cast<double>(i++), ev.get<double>()});
    write_csv(path(std::string(key) + "_spectrum.csv"), "index,eigenvalue", rows);
  }
}

}  // namespace zayan::app
