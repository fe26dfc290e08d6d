#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zayan/common.hpp"

namespace zayan::tab {

// Tabular classification dataset: N rows, m features, labels in [0, C).
struct Dataset {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> x;  // row-major n_rows * n_features
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  std::size_t n_classes() const { return class_names.size(); }
  double at(std::size_t r, std::size_t c) const { return x[r * n_features + c]; }
  double& at(std::size_t r, std::size_t c) { return x[r * n_features + c]; }
  std::vector<double> column(std::size_t c) const;
  std::vector<double> row(std::size_t r) const;
  std::vector<std::size_t> class_counts() const;

  // Enforces the structural invariants (N >= 1, m >= 2, C >= 2, labels in
  // range, finite values, unique feature names).
  void validate() const;
};

struct ScalerStats {
  std::vector<double> mean;
  std::vector<double> stddev;           // population convention, divisor N
  std::vector<bool> zero_variance;      // flagged columns get stddev = 1
};

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct CsvOptions {
  bool has_header = true;
  bool impute_missing = false;  // mean imputation for empty/nan feature cells
};

// Loads a comma-separated file. The label column is selected by name (needs
// a header) or by 0-based index given as digits. Labels are remapped to
// contiguous ids; class_names keeps the original vocabulary (numeric labels
// sorted by value, otherwise lexicographically).
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const CsvOptions& options = {});

std::string dataset_fingerprint(const Dataset& d);
std::uint64_t dataset_content_hash(const Dataset& d);

// Column-wise z-scoring with the population standard deviation.
// Zero-variance columns become all-zero and are flagged; their recorded
// stddev is 1 so the transform stays invertible.
std::pair<Dataset, ScalerStats> standardize(const Dataset& d);
Dataset apply_scaler(const Dataset& d, const ScalerStats& stats);
Dataset inverse_scaler(const Dataset& d, const ScalerStats& stats);

Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows);

// Deterministic stratified folds: every row lands in exactly one test fold
// and per-fold class counts differ from floor(count/k) by at most one.
std::vector<FoldSplit> stratified_kfold(const Dataset& d, std::size_t k,
                                        std::uint64_t seed);

// Class-conditional Gaussian generator with redundant feature groups.
// Features are split into `redundancy_groups` contiguous groups; each group
// shares one informative base signal (class mean drawn from N(0, 3^2), unit
// within-class noise) and every member is base + N(0, noise^2).
Dataset make_synthetic(std::size_t n, std::size_t m, std::size_t classes,
                       std::size_t redundancy_groups, double noise,
                       std::uint64_t seed);

void save_csv(const Dataset& d, const std::string& path,
              const std::string& label_column_name = "label");

// Feature rows for inference. When `label_column` names a present column it
// is split out as raw label strings instead of being parsed as a feature.
struct FeatureTable {
  std::vector<std::string> feature_names;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> x;  // row-major
  std::vector<std::string> raw_labels;  // empty when no label column
};

FeatureTable load_feature_csv(const std::string& path, bool has_header,
                              const std::string& label_column = "");

}  // namespace zayan::tab
