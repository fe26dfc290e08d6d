#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zayan/model.hpp"
#include "zayan/pretrain.hpp"

namespace zayan::diag {

// Class-probability rows, one per sample.
struct Probs {
  std::size_t n = 0;
  std::size_t classes = 0;
  std::vector<double> v;  // row-major

  static Probs from_predictions(const std::vector<zt::Prediction>& preds);
  double at(std::size_t i, std::size_t k) const { return v[i * classes + k]; }
  double& at(std::size_t i, std::size_t k) { return v[i * classes + k]; }
  std::vector<double> confidence() const;  // max probability per row
  std::vector<int> argmax() const;         // lowest index wins ties
};

double accuracy_of(const std::vector<int>& predicted,
                   const std::vector<int>& labels);

// Shannon entropy in nats of one probability row.
double prediction_entropy(const std::vector<double>& probabilities);

// ---------------------------------------------------------------------------
// cross-validation

struct CVResult {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over folds
  std::vector<std::vector<std::size_t>> fold_confusions;  // C*C, true-major
};

struct CVOutput {
  CVResult result;
  // out-of-fold predictions in original row order
  Probs pooled_probs;
  std::vector<int> pooled_labels;
  // last fold's artifacts, for model-level diagnostics on held-out rows
  zt::ModelBundle final_model;
  zt::RowMatrix final_test_rows;  // standardized with the fold's scaler
  std::vector<int> final_test_labels;
  std::vector<std::size_t> final_test_global_indices;
  std::vector<zt::FinetuneHistory> fold_histories;
  zt::LatencyStats final_latency;
};

// Per fold: standardize on the training split, pretrain, fine-tune, and
// score the held-out split. Folds run in parallel up to `threads`; each
// fold derives its own seed from (seed, fold) so results do not depend on
// scheduling.
CVOutput cross_validate(const tab::Dataset& d, const cl::PretrainConfig& pre_cfg,
                        const zt::ZayanTConfig& t_cfg, std::size_t k,
                        std::uint64_t seed, unsigned threads = 1);

// ---------------------------------------------------------------------------
// calibration and confidence

struct ReliabilityBins {
  std::vector<double> edges;  // n_bins + 1, equal width over [0, 1]
  std::vector<std::size_t> count;
  std::vector<double> mean_confidence;
  std::vector<double> accuracy;
  double ece = 0.0;
};

ReliabilityBins expected_calibration_error(const Probs& probs,
                                           const std::vector<int>& labels,
                                           std::size_t n_bins);

struct SelectivePoint {
  double threshold = 0.0;
  double coverage = 0.0;
  std::optional<double> accuracy;  // empty when nothing is retained
};

std::vector<SelectivePoint> selective_prediction_curve(
    const Probs& probs, const std::vector<int>& labels,
    const std::vector<double>& thresholds);

struct MarginTopk {
  std::vector<double> margins;  // p_top1 - p_top2 per sample
  double mean_margin_correct = 0.0;
  double mean_margin_incorrect = 0.0;
  std::vector<std::pair<std::size_t, double>> topk_accuracy;
};

MarginTopk margin_topk(const Probs& probs, const std::vector<int>& labels,
                       const std::vector<std::size_t>& ks);

// ---------------------------------------------------------------------------
// robustness, sanity, OOD

enum class PerturbMode { Shuffle, Drop };

struct RobustnessPoint {
  double fraction = 0.0;
  std::size_t n_perturbed = 0;
  double accuracy = 0.0;
};

// Perturbs a nested random subset of features per fraction: Shuffle
// permutes each chosen column across rows, Drop replaces it with the
// feature mean (zero in standardized space unless `means` is given).
std::vector<RobustnessPoint> robustness_sweep(
    zt::ZayanTState& model, const zt::RowMatrix& rows,
    const std::vector<int>& labels, const std::vector<double>& fractions,
    PerturbMode mode, std::uint64_t seed,
    const std::vector<double>* means = nullptr);

struct SanityModes {
  double full = 0.0;
  double zero = 0.0;
  double mean = 0.0;
  double shuffle_rows = 0.0;
  double heavy_noise = 0.0;
  double heavy_noise_sigma = 3.0;
};

SanityModes sanity_modes(zt::ZayanTState& model, const zt::RowMatrix& rows,
                         const std::vector<int>& labels, std::uint64_t seed);

struct OodRegime {
  std::string name;
  double mean_max_confidence = 0.0;
  double mean_entropy = 0.0;  // natural log
};

// Regimes: id (clean), noise (sigma=1 on all features), permute
// (independent per-column shuffles), constant (every row replaced by the
// feature-mean row of the input).
std::vector<OodRegime> ood_confidence_report(zt::ZayanTState& model,
                                             const zt::RowMatrix& rows,
                                             std::uint64_t seed);

struct SensitivityReport {
  double eps = 0.0;
  std::size_t n_directions = 0;
  std::vector<double> per_row;  // mean logit displacement per row
  double mean = 0.0;
  double median = 0.0;
};

SensitivityReport local_sensitivity(zt::ZayanTState& model,
                                    const zt::RowMatrix& rows, double eps,
                                    std::size_t n_directions,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// triage, importance, geometry

struct TriageMetrics {
  double auc = 0.0;
  double best_threshold = 0.0;  // maximizes Youden's J
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<std::pair<double, double>> roc;  // (fpr, tpr)
};

TriageMetrics triage_metrics(const Probs& probs, const std::vector<int>& labels,
                             int positive_class);

struct ImportanceEntry {
  std::size_t feature = 0;
  std::string name;
  double accuracy_drop = 0.0;  // baseline - permuted, in accuracy points
};

std::vector<ImportanceEntry> permutation_importance(
    zt::ZayanTState& model, const zt::RowMatrix& rows,
    const std::vector<int>& labels, const std::vector<std::string>& names,
    std::uint64_t seed);

struct EmbeddingGeometry {
  double offdiag_mean = 0.0;
  double offdiag_abs_mean = 0.0;
  std::vector<double> eigenvalues;  // descending
  double participation_ratio = 0.0;
  // number of leading components reaching each cumulative-variance target
  std::vector<std::pair<double, std::size_t>> components_for_variance;
  std::vector<std::pair<std::size_t, double>> loo_knn_accuracy;
};

// Spectrum of Z^T Z for the frozen feature embeddings.
EmbeddingGeometry feature_embedding_geometry(const cl::FeatureEmbeddingMatrix& z);

// PCA spectrum of centered sample embeddings plus leave-one-out kNN with
// cosine distance for the requested neighbor counts.
EmbeddingGeometry sample_embedding_geometry(
    const std::vector<double>& embeddings, std::size_t n, std::size_t d,
    const std::vector<int>& labels, const std::vector<std::size_t>& ks);

double participation_ratio(const std::vector<double>& eigenvalues);

struct TtaReport {
  std::size_t votes = 0;
  double clean_accuracy = 0.0;
  double tta_accuracy = 0.0;
  double change_fraction = 0.0;  // rows whose vote differs from clean
};

TtaReport tta_consistency(zt::ZayanTState& model, const zt::RowMatrix& rows,
                          const std::vector<int>& labels,
                          const aug::AugmentConfig& cfg, std::size_t votes,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Turing sheet

struct TuringExport {
  std::vector<std::size_t> indices;  // sampled global indices, ascending
  double model_accuracy = 0.0;
};

TuringExport export_turing_sheet(zt::ZayanTState& model,
                                 const zt::RowMatrix& rows,
                                 const std::vector<int>& labels,
                                 const std::vector<std::string>& feature_names,
                                 const std::vector<std::string>& class_names,
                                 std::size_t n_max, std::uint64_t seed,
                                 const std::string& path);

struct TuringScore {
  std::size_t n = 0;
  std::size_t n_filled = 0;
  double human_accuracy = 0.0;        // over filled rows
  double human_model_agreement = 0.0; // over filled rows
  double model_accuracy = 0.0;        // over all rows
};

TuringScore score_turing_sheet(const std::string& path);

}  // namespace zayan::diag
