#include "zayan/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace zayan::diag {

namespace {

constexpr std::uint64_t kFoldTag = 0x63766b66ull;
constexpr std::uint64_t kShuffleTag = 0x73686668ull;
constexpr std::uint64_t kRowPermTag = 0x72706d74ull;
constexpr std::uint64_t kNoiseTag = 0x686e7a65ull;
constexpr std::uint64_t kOodTag = 0x6f6f6471ull;
constexpr std::uint64_t kSensTag = 0x73656e73ull;
constexpr std::uint64_t kImpTag = 0x696d7074ull;
constexpr std::uint64_t kTtaTag = 0x74746131ull;
constexpr std::uint64_t kTuringTag = 0x74757269ull;

std::vector<int> predicted_classes(zt::ZayanTState& model,
                                   const zt::RowMatrix& rows) {
  const auto preds = zt::predict_batch(rows, model);
  std::vector<int> out(preds.items.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = preds.items[i].predicted_class;
  return out;
}

std::vector<double> column_means(const zt::RowMatrix& rows) {
  std::vector<double> means(rows.m, 0.0);
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c) means[c] += rows.at(r, c);
  for (auto& v : means) v /= static_cast<double>(rows.n);
  return means;
}

void shuffle_column(zt::RowMatrix& rows, std::size_t col, RngStream& rng) {
  std::vector<double> vals(rows.n);
  for (std::size_t r = 0; r < rows.n; ++r) vals[r] = rows.at(r, col);
  rng.shuffle(vals);
  for (std::size_t r = 0; r < rows.n; ++r) rows.at(r, col) = vals[r];
}

double entropy_nats(const double* p, std::size_t c) {
  double h = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  }
  return h;
}

std::vector<double> eigen_descending(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw NumericError("eigenvalue decomposition failed");
  const auto& ev = solver.eigenvalues();
  std::vector<double> out(ev.size());
  for (long i = 0; i < ev.size(); ++i)
    out[static_cast<std::size_t>(i)] = ev[ev.size() - 1 - i];
  return out;
}

std::vector<std::pair<double, std::size_t>> variance_components(
    const std::vector<double>& eigenvalues) {
  const std::vector<double> targets{0.5, 0.8, 0.9, 0.95, 0.99};
  double total = 0.0;
  for (double v : eigenvalues) total += std::max(v, 0.0);
  std::vector<std::pair<double, std::size_t>> out;
  for (double t : targets) {
    std::size_t k = eigenvalues.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
      acc += std::max(eigenvalues[i], 0.0);
      if (total > 0.0 && acc >= t * total) {
        k = i + 1;
        break;
      }
    }
    out.emplace_back(t, k);
  }
  return out;
}

}  // namespace

Probs Probs::from_predictions(const std::vector<zt::Prediction>& preds) {
  Probs p;
  p.n = preds.size();
  p.classes = preds.empty() ? 0 : preds[0].probabilities.size();
  p.v.reserve(p.n * p.classes);
  for (const auto& pred : preds)
    p.v.insert(p.v.end(), pred.probabilities.begin(), pred.probabilities.end());
  return p;
}

std::vector<double> Probs::confidence() const {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = *std::max_element(&v[i * classes], &v[(i + 1) * classes]);
  return out;
}

std::vector<int> Probs::argmax() const {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k)
      if (at(i, k) > at(i, best)) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double prediction_entropy(const std::vector<double>& probabilities) {
  return entropy_nats(probabilities.data(), probabilities.size());
}

double accuracy_of(const std::vector<int>& predicted,
                   const std::vector<int>& labels) {
  if (predicted.size() != labels.size() || predicted.empty())
    throw DataError("accuracy: size mismatch or empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

CVOutput cross_validate(const tab::Dataset& d, const cl::PretrainConfig& pre_cfg,
                        const zt::ZayanTConfig& t_cfg, std::size_t k,
                        std::uint64_t seed, unsigned threads) {
  pre_cfg.validate();
  t_cfg.validate(pre_cfg.encoder.emb_dim);
  const auto folds = tab::stratified_kfold(d, k, seed);
  const std::size_t c = d.n_classes();

  CVOutput out;
  out.result.fold_accuracies.resize(k);
  out.result.fold_confusions.assign(k, std::vector<std::size_t>(c * c, 0));
  out.pooled_probs.n = d.n_rows;
  out.pooled_probs.classes = c;
  out.pooled_probs.v.assign(d.n_rows * c, 0.0);
  out.pooled_labels = d.labels;
  out.fold_histories.resize(k);

  parallel_for(k, threads, [&](std::size_t f) {
    const auto& fold = folds[f];
    const auto train_raw = tab::select_rows(d, fold.train_indices);
    const auto test_raw = tab::select_rows(d, fold.test_indices);
    auto [train, scaler] = tab::standardize(train_raw);
    const auto test = tab::apply_scaler(test_raw, scaler);

    const std::uint64_t fold_seed =
        fnv1a64(&f, sizeof(f), fnv1a64(&seed, sizeof(seed), kFoldTag));
    cl::PretrainConfig pcfg = pre_cfg;
    pcfg.seed = fold_seed;
    zt::ZayanTConfig tcfg = t_cfg;
    tcfg.seed = fold_seed ^ 0x5a5a5a5aull;

    auto pre = cl::pretrain(train, pcfg);
    auto [model, history] = zt::finetune(train, std::move(pre.encoder),
                                         std::move(pre.z), tcfg);
    out.fold_histories[f] = std::move(history);

    const auto test_rows = zt::RowMatrix::from_dataset(test);
    auto preds = zt::predict_batch(test_rows, model);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.items.size(); ++i) {
      const int truth = test.labels[i];
      const int hat = preds.items[i].predicted_class;
      hits += hat == truth ? 1 : 0;
      out.result.fold_confusions[f][static_cast<std::size_t>(truth) * c +
                                    static_cast<std::size_t>(hat)] += 1;
      const auto& p = preds.items[i].probabilities;
      std::copy(p.begin(), p.end(),
                out.pooled_probs.v.begin() +
                    static_cast<long>(fold.test_indices[i] * c));
    }
    out.result.fold_accuracies[f] =
        static_cast<double>(hits) / static_cast<double>(preds.items.size());

    if (f == k - 1) {
      out.final_model.state = std::move(model);
      out.final_model.scaler = std::move(scaler);
      out.final_model.feature_names = d.feature_names;
      out.final_model.class_names = d.class_names;
      out.final_test_rows = test_rows;
      out.final_test_labels = test.labels;
      out.final_test_global_indices = fold.test_indices;
      out.final_latency = preds.latency;
    }
  });

  double mean = 0.0;
  for (double a : out.result.fold_accuracies) mean += a;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double a : out.result.fold_accuracies) var += (a - mean) * (a - mean);
  out.result.mean_accuracy = mean;
  out.result.std_accuracy = std::sqrt(var / static_cast<double>(k));
  return out;
}

ReliabilityBins expected_calibration_error(const Probs& probs,
                                           const std::vector<int>& labels,
                                           std::size_t n_bins) {
  if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
  if (probs.n != labels.size()) throw DataError("ece: size mismatch");
  ReliabilityBins bins;
  bins.edges.resize(n_bins + 1);
  for (std::size_t b = 0; b <= n_bins; ++b)
    bins.edges[b] = static_cast<double>(b) / static_cast<double>(n_bins);
  bins.count.assign(n_bins, 0);
  bins.mean_confidence.assign(n_bins, 0.0);
  bins.accuracy.assign(n_bins, 0.0);

  const auto conf = probs.confidence();
  const auto pred = probs.argmax();
  for (std::size_t i = 0; i < probs.n; ++i) {
    auto b = static_cast<std::size_t>(conf[i] * static_cast<double>(n_bins));
    b = std::min(b, n_bins - 1);
    bins.count[b] += 1;
    bins.mean_confidence[b] += conf[i];
    bins.accuracy[b] += pred[i] == labels[i] ? 1.0 : 0.0;
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins.count[b] == 0) continue;
    bins.mean_confidence[b] /= static_cast<double>(bins.count[b]);
    bins.accuracy[b] /= static_cast<double>(bins.count[b]);
    ece += static_cast<double>(bins.count[b]) / static_cast<double>(probs.n) *
           std::abs(bins.accuracy[b] - bins.mean_confidence[b]);
  }
  bins.ece = ece;
  return bins;
}

std::vector<SelectivePoint> selective_prediction_curve(
    const Probs& probs, const std::vector<int>& labels,
    const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ConfigError("selective_prediction: thresholds must be ascending");
  const auto conf = probs.confidence();
  const auto pred = probs.argmax();
  std::vector<SelectivePoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    SelectivePoint point;
    point.threshold = t;
    std::size_t retained = 0, hits = 0;
    for (std::size_t i = 0; i < probs.n; ++i) {
      if (conf[i] >= t) {
        ++retained;
        hits += pred[i] == labels[i] ? 1 : 0;
      }
    }
    point.coverage = static_cast<double>(retained) / static_cast<double>(probs.n);
    if (retained > 0)
      point.accuracy = static_cast<double>(hits) / static_cast<double>(retained);
    out.push_back(point);
  }
  return out;
}

MarginTopk margin_topk(const Probs& probs, const std::vector<int>& labels,
                       const std::vector<std::size_t>& ks) {
  if (probs.classes < 2) throw DataError("margin_topk: need C >= 2");
  for (std::size_t k : ks) {
    if (k < 1 || k > probs.classes)
      throw ConfigError("margin_topk: k must be in [1, C]");
  }
  MarginTopk out;
  out.margins.resize(probs.n);
  double sum_correct = 0.0, sum_incorrect = 0.0;
  std::size_t n_correct = 0, n_incorrect = 0;

  // class order per sample: probability descending, index ascending on ties
  std::vector<std::vector<std::size_t>> order(probs.n);
  for (std::size_t i = 0; i < probs.n; ++i) {
    order[i].resize(probs.classes);
    std::iota(order[i].begin(), order[i].end(), 0);
    std::stable_sort(order[i].begin(), order[i].end(),
                     [&](std::size_t a, std::size_t b) {
                       return probs.at(i, a) > probs.at(i, b);
                     });
    out.margins[i] = probs.at(i, order[i][0]) - probs.at(i, order[i][1]);
    if (static_cast<int>(order[i][0]) == labels[i]) {
      sum_correct += out.margins[i];
      ++n_correct;
    } else {
      sum_incorrect += out.margins[i];
      ++n_incorrect;
    }
  }
  out.mean_margin_correct = n_correct ? sum_correct / static_cast<double>(n_correct) : 0.0;
  out.mean_margin_incorrect =
      n_incorrect ? sum_incorrect / static_cast<double>(n_incorrect) : 0.0;

  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.n; ++i) {
      for (std::size_t r = 0; r < k; ++r) {
        if (static_cast<int>(order[i][r]) == labels[i]) {
          ++hits;
          break;
        }
      }
    }
    out.topk_accuracy.emplace_back(
        k, static_cast<double>(hits) / static_cast<double>(probs.n));
  }
  return out;
}

std::vector<RobustnessPoint> robustness_sweep(
    zt::ZayanTState& model, const zt::RowMatrix& rows,
    const std::vector<int>& labels, const std::vector<double>& fractions,
    PerturbMode mode, std::uint64_t seed, const std::vector<double>* means) {
  for (double f : fractions) {
    if (f < 0.0 || f > 1.0)
      throw ConfigError("robustness_sweep: fractions must lie in [0, 1]");
  }
  // one fixed feature order; fractions take nested prefixes of it
  std::vector<std::size_t> feature_order(rows.m);
  std::iota(feature_order.begin(), feature_order.end(), 0);
  RngStream order_rng = derive_stream(seed, kShuffleTag);
  order_rng.shuffle(feature_order);

  std::vector<RobustnessPoint> out;
  for (double f : fractions) {
    const auto n_pert = static_cast<std::size_t>(
        std::llround(f * static_cast<double>(rows.m)));
    zt::RowMatrix perturbed = rows;
    for (std::size_t idx = 0; idx < n_pert; ++idx) {
      const std::size_t col = feature_order[idx];
      if (mode == PerturbMode::Shuffle) {
        RngStream col_rng = derive_stream(seed, kShuffleTag, 1 + col);
        shuffle_column(perturbed, col, col_rng);
      } else {
        const double v = means != nullptr ? (*means)[col] : 0.0;
        for (std::size_t r = 0; r < rows.n; ++r) perturbed.at(r, col) = v;
      }
    }
    RobustnessPoint point;
    point.fraction = f;
    point.n_perturbed = n_pert;
    point.accuracy = accuracy_of(predicted_classes(model, perturbed), labels);
    out.push_back(point);
  }
  return out;
}

SanityModes sanity_modes(zt::ZayanTState& model, const zt::RowMatrix& rows,
                         const std::vector<int>& labels, std::uint64_t seed) {
  SanityModes out;
  out.full = accuracy_of(predicted_classes(model, rows), labels);

  zt::RowMatrix zeros = rows;
  std::fill(zeros.x.begin(), zeros.x.end(), 0.0);
  out.zero = accuracy_of(predicted_classes(model, zeros), labels);

  const auto means = column_means(rows);
  zt::RowMatrix meaned = rows;
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c) meaned.at(r, c) = means[c];
  out.mean = accuracy_of(predicted_classes(model, meaned), labels);

  zt::RowMatrix permuted = rows;
  std::vector<std::size_t> order(rows.n);
  std::iota(order.begin(), order.end(), 0);
  RngStream row_rng = derive_stream(seed, kRowPermTag);
  row_rng.shuffle(order);
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c)
      permuted.at(r, c) = rows.at(order[r], c);
  out.shuffle_rows = accuracy_of(predicted_classes(model, permuted), labels);

  zt::RowMatrix noisy = rows;
  RngStream noise_rng = derive_stream(seed, kNoiseTag);
  for (auto& v : noisy.x) v += out.heavy_noise_sigma * noise_rng.normal();
  out.heavy_noise = accuracy_of(predicted_classes(model, noisy), labels);
  return out;
}

std::vector<OodRegime> ood_confidence_report(zt::ZayanTState& model,
                                             const zt::RowMatrix& rows,
                                             std::uint64_t seed) {
  auto stats_for = [&](const zt::RowMatrix& input, const std::string& name) {
    const auto preds = zt::predict_batch(input, model);
    OodRegime regime;
    regime.name = name;
    for (const auto& p : preds.items) {
      regime.mean_max_confidence +=
          *std::max_element(p.probabilities.begin(), p.probabilities.end());
      regime.mean_entropy += entropy_nats(p.probabilities.data(),
                                          p.probabilities.size());
    }
    const auto n = static_cast<double>(preds.items.size());
    regime.mean_max_confidence /= n;
    regime.mean_entropy /= n;
    return regime;
  };

  std::vector<OodRegime> out;
  out.push_back(stats_for(rows, "id"));

  zt::RowMatrix noisy = rows;
  RngStream noise_rng = derive_stream(seed, kOodTag, 1);
  for (auto& v : noisy.x) v += noise_rng.normal();
  out.push_back(stats_for(noisy, "noise"));

  zt::RowMatrix permuted = rows;
  for (std::size_t c = 0; c < rows.m; ++c) {
    RngStream col_rng = derive_stream(seed, kOodTag, 2, c);
    shuffle_column(permuted, c, col_rng);
  }
  out.push_back(stats_for(permuted, "permute"));

  const auto means = column_means(rows);
  zt::RowMatrix constant = rows;
  for (std::size_t r = 0; r < rows.n; ++r)
    for (std::size_t c = 0; c < rows.m; ++c) constant.at(r, c) = means[c];
  out.push_back(stats_for(constant, "constant"));
  return out;
}

SensitivityReport local_sensitivity(zt::ZayanTState& model,
                                    const zt::RowMatrix& rows, double eps,
                                    std::size_t n_directions,
                                    std::uint64_t seed) {
  if (eps < 0.0) throw ConfigError("local_sensitivity: eps must be >= 0");
  if (n_directions < 1)
    throw ConfigError("local_sensitivity: need at least one direction");
  SensitivityReport report;
  report.eps = eps;
  report.n_directions = n_directions;
  report.per_row.resize(rows.n, 0.0);

  const auto base = zt::predict_batch(rows, model);
  for (std::size_t dir = 0; dir < n_directions; ++dir) {
    zt::RowMatrix perturbed = rows;
    for (std::size_t r = 0; r < rows.n; ++r) {
      RngStream rng = derive_stream(seed, kSensTag, r, dir);
      std::vector<double> u(rows.m);
      double norm = 0.0;
      for (auto& v : u) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(std::max(norm, 1e-300));
      for (std::size_t c = 0; c < rows.m; ++c)
        perturbed.at(r, c) = rows.at(r, c) + eps * u[c] / norm;
    }
    const auto moved = zt::predict_batch(perturbed, model);
    for (std::size_t r = 0; r < rows.n; ++r) {
      double sq = 0.0;
      for (std::size_t k = 0; k < base.items[r].logits.size(); ++k) {
        const double diff = moved.items[r].logits[k] - base.items[r].logits[k];
        sq += diff * diff;
      }
      report.per_row[r] += std::sqrt(sq);
    }
  }
  for (auto& v : report.per_row) v /= static_cast<double>(n_directions);
  double total = 0.0;
  for (double v : report.per_row) total += v;
  report.mean = total / static_cast<double>(rows.n);
  auto sorted = report.per_row;
  std::sort(sorted.begin(), sorted.end());
  report.median = rows.n % 2 == 1
                      ? sorted[rows.n / 2]
                      : 0.5 * (sorted[rows.n / 2 - 1] + sorted[rows.n / 2]);
  return report;
}

TriageMetrics triage_metrics(const Probs& probs, const std::vector<int>& labels,
                             int positive_class) {
  if (positive_class < 0 || static_cast<std::size_t>(positive_class) >= probs.classes)
    throw DataError("triage: positive class out of range");
  std::vector<double> scores(probs.n);
  std::vector<int> truth(probs.n);
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < probs.n; ++i) {
    scores[i] = probs.at(i, static_cast<std::size_t>(positive_class));
    truth[i] = labels[i] == positive_class ? 1 : 0;
    n_pos += truth[i];
  }
  const std::size_t n_neg = probs.n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("triage: both classes must be present after grouping");

  std::vector<double> unique_scores(scores);
  std::sort(unique_scores.begin(), unique_scores.end(), std::greater<>());
  unique_scores.erase(std::unique(unique_scores.begin(), unique_scores.end()),
                      unique_scores.end());

  TriageMetrics out;
  out.roc.emplace_back(0.0, 0.0);  // threshold above every score
  double best_j = -1.0;
  for (double t : unique_scores) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < probs.n; ++i) {
      if (scores[i] >= t) {
        if (truth[i]) ++tp;
        else ++fp;
      }
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    out.roc.emplace_back(fpr, tpr);
    const double j = tpr + (1.0 - fpr) - 1.0;
    // ties broken toward higher sensitivity (lower threshold)
    if (j > best_j + 1e-15 || (std::abs(j - best_j) <= 1e-15 && tpr > out.sensitivity)) {
      best_j = j;
      out.best_threshold = t;
      out.sensitivity = tpr;
      out.specificity = 1.0 - fpr;
      const std::size_t tn = n_neg - fp;
      const std::size_t fn = n_pos - tp;
      out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(probs.n);
      out.precision = tp + fp > 0
                          ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                          : 0.0;
      out.recall = out.sensitivity;
      (void)fn;
    }
  }
  // trapezoid over the sweep (points are sorted by construction)
  double auc = 0.0;
  for (std::size_t i = 1; i < out.roc.size(); ++i) {
    const auto& [x0, y0] = out.roc[i - 1];
    const auto& [x1, y1] = out.roc[i];
    auc += (x1 - x0) * 0.5 * (y0 + y1);
  }
  out.auc = auc;
  return out;
}

std::vector<ImportanceEntry> permutation_importance(
    zt::ZayanTState& model, const zt::RowMatrix& rows,
    const std::vector<int>& labels, const std::vector<std::string>& names,
    std::uint64_t seed) {
  const double baseline = accuracy_of(predicted_classes(model, rows), labels);
  std::vector<ImportanceEntry> out;
  out.reserve(rows.m);
  for (std::size_t c = 0; c < rows.m; ++c) {
    zt::RowMatrix permuted = rows;
    RngStream rng = derive_stream(seed, kImpTag, c);
    shuffle_column(permuted, c, rng);
    ImportanceEntry entry;
    entry.feature = c;
    entry.name = c < names.size() ? names[c] : "f" + std::to_string(c);
    entry.accuracy_drop =
        (baseline - accuracy_of(predicted_classes(model, permuted), labels)) * 100.0;
    out.push_back(std::move(entry));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) {
                     return a.accuracy_drop > b.accuracy_drop;
                   });
  return out;
}

double participation_ratio(const std::vector<double>& eigenvalues) {
  double sum = 0.0, sum_sq = 0.0;
  for (double v : eigenvalues) {
    const double x = std::max(v, 0.0);
    sum += x;
    sum_sq += x * x;
  }
  return sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
}

EmbeddingGeometry feature_embedding_geometry(const cl::FeatureEmbeddingMatrix& z) {
  z.validate();
  EmbeddingGeometry out;
  const auto stats = cl::gram_offdiagonal_stats(z);
  out.offdiag_mean = stats.offdiag_mean;
  out.offdiag_abs_mean = stats.offdiag_abs_mean;

  Eigen::MatrixXd gram(z.m, z.m);
  for (std::size_t i = 0; i < z.m; ++i) {
    for (std::size_t j = 0; j < z.m; ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < z.d; ++r) dot += z.at(r, i) * z.at(r, j);
      gram(static_cast<long>(i), static_cast<long>(j)) = dot;
    }
  }
  out.eigenvalues = eigen_descending(gram);
  out.participation_ratio = participation_ratio(out.eigenvalues);
  out.components_for_variance = variance_components(out.eigenvalues);
  return out;
}

EmbeddingGeometry sample_embedding_geometry(
    const std::vector<double>& embeddings, std::size_t n, std::size_t d,
    const std::vector<int>& labels, const std::vector<std::size_t>& ks) {
  if (n < 2) throw DataError("sample geometry: need at least 2 rows");
  if (embeddings.size() != n * d) throw DataError("sample geometry: size mismatch");
  EmbeddingGeometry out;

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) mean[c] += embeddings[i * d + c];
  for (auto& v : mean) v /= static_cast<double>(n);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<long>(d),
                                              static_cast<long>(d));
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd row(static_cast<long>(d));
    for (std::size_t c = 0; c < d; ++c) row[static_cast<long>(c)] =
        embeddings[i * d + c] - mean[c];
    cov += row * row.transpose();
  }
  cov /= static_cast<double>(n);
  out.eigenvalues = eigen_descending(cov);
  out.participation_ratio = participation_ratio(out.eigenvalues);
  out.components_for_variance = variance_components(out.eigenvalues);

  if (!labels.empty()) {
    if (labels.size() != n) throw DataError("sample geometry: label count mismatch");
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double q = 0.0;
      for (std::size_t c = 0; c < d; ++c) q += embeddings[i * d + c] * embeddings[i * d + c];
      norms[i] = std::sqrt(std::max(q, 1e-300));
    }
    const int n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    for (std::size_t k : ks) {
      if (k >= n) continue;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c)
            dot += embeddings[i * d + c] * embeddings[j * d + c];
          dist.emplace_back(1.0 - dot / (norms[i] * norms[j]), j);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k),
                          dist.end());
        std::vector<std::size_t> votes(static_cast<std::size_t>(n_classes), 0);
        for (std::size_t t = 0; t < k; ++t)
          votes[static_cast<std::size_t>(labels[dist[t].second])] += 1;
        std::size_t winner = 0;
        for (std::size_t cl = 1; cl < votes.size(); ++cl)
          if (votes[cl] > votes[winner]) winner = cl;
        hits += static_cast<int>(winner) == labels[i] ? 1 : 0;
      }
      out.loo_knn_accuracy.emplace_back(
          k, static_cast<double>(hits) / static_cast<double>(n));
    }
  }
  return out;
}

TtaReport tta_consistency(zt::ZayanTState& model, const zt::RowMatrix& rows,
                          const std::vector<int>& labels,
                          const aug::AugmentConfig& cfg, std::size_t votes,
                          std::uint64_t seed) {
  if (votes % 2 == 0) throw ConfigError("tta: vote count must be odd");
  cfg.validate();
  TtaReport out;
  out.votes = votes;
  const auto clean = predicted_classes(model, rows);
  out.clean_accuracy = accuracy_of(clean, labels);

  std::vector<std::vector<std::size_t>> tallies(
      rows.n, std::vector<std::size_t>(model.n_classes, 0));
  for (std::size_t vote = 0; vote < votes; ++vote) {
    zt::RowMatrix augmented = rows;
    for (std::size_t c = 0; c < rows.m; ++c) {
      std::vector<double> col(rows.n);
      for (std::size_t r = 0; r < rows.n; ++r) col[r] = rows.at(r, c);
      RngStream rng = derive_stream(seed, kTtaTag + vote, c);
      const auto view = aug::augment_one_view(col, cfg, rng);
      for (std::size_t r = 0; r < rows.n; ++r)
        augmented.at(r, c) = view.values[r];
    }
    const auto preds = predicted_classes(model, augmented);
    for (std::size_t r = 0; r < rows.n; ++r)
      tallies[r][static_cast<std::size_t>(preds[r])] += 1;
  }
  std::vector<int> voted(rows.n);
  std::size_t hits = 0, changed = 0;
  for (std::size_t r = 0; r < rows.n; ++r) {
    std::size_t winner = 0;
    for (std::size_t cl = 1; cl < tallies[r].size(); ++cl)
      if (tallies[r][cl] > tallies[r][winner]) winner = cl;
    voted[r] = static_cast<int>(winner);
    hits += voted[r] == labels[r] ? 1 : 0;
    changed += voted[r] != clean[r] ? 1 : 0;
  }
  out.tta_accuracy = static_cast<double>(hits) / static_cast<double>(rows.n);
  out.change_fraction = static_cast<double>(changed) / static_cast<double>(rows.n);
  return out;
}

TuringExport export_turing_sheet(zt::ZayanTState& model,
                                 const zt::RowMatrix& rows,
                                 const std::vector<int>& labels,
                                 const std::vector<std::string>& feature_names,
                                 const std::vector<std::string>& class_names,
                                 std::size_t n_max, std::uint64_t seed,
                                 const std::string& path) {
  if (rows.n == 0) throw DataError("turing export: no rows");
  RngStream rng = derive_stream(seed, kTuringTag);
  auto indices = rng.sample_without_replacement(rows.n, std::min(n_max, rows.n));
  std::sort(indices.begin(), indices.end());

  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "global_index,true_label,model_pred,model_confidence,human_label";
  for (const auto& name : feature_names) out << "," << name;
  out << "\n";

  const auto preds = zt::predict_batch(rows, model);
  std::size_t hits = 0;
  char buf[64];
  for (std::size_t idx : indices) {
    const auto& p = preds.items[idx];
    hits += p.predicted_class == labels[idx] ? 1 : 0;
    const double conf = *std::max_element(p.probabilities.begin(),
                                          p.probabilities.end());
    out << idx << "," << class_names[static_cast<std::size_t>(labels[idx])] << ","
        << class_names[static_cast<std::size_t>(p.predicted_class)] << ",";
    std::snprintf(buf, sizeof(buf), "%.6f", conf);
    out << buf << ",";  // human_label left blank
    for (std::size_t c = 0; c < rows.m; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", rows.at(idx, c));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);

  TuringExport result;
  result.indices = std::move(indices);
  result.model_accuracy =
      static_cast<double>(hits) / static_cast<double>(result.indices.size());
  return result;
}

TuringScore score_turing_sheet(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("turing sheet: empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError("turing sheet: missing column " + name);
  };
  const auto true_col = col_of("true_label");
  const auto pred_col = col_of("model_pred");
  const auto human_col = col_of("human_label");

  TuringScore score;
  std::size_t model_hits = 0, human_hits = 0, agree = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() <= human_col) continue;
    score.n += 1;
    const auto& truth = cells[true_col];
    const auto& pred = cells[pred_col];
    const auto& human = cells[human_col];
    model_hits += pred == truth ? 1 : 0;
    if (!human.empty()) {
      score.n_filled += 1;
      human_hits += human == truth ? 1 : 0;
      agree += human == pred ? 1 : 0;
    }
  }
  if (score.n == 0) throw DataError("turing sheet: no data rows");
  score.model_accuracy = static_cast<double>(model_hits) / static_cast<double>(score.n);
  if (score.n_filled > 0) {
    score.human_accuracy =
        static_cast<double>(human_hits) / static_cast<double>(score.n_filled);
    score.human_model_agreement =
        static_cast<double>(agree) / static_cast<double>(score.n_filled);
  }
  return score;
}

}  // namespace zayan::diag
