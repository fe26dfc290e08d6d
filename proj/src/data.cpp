#include "zayan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace zayan::tab {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

bool is_missing_cell(const std::string& s) {
  if (s.empty()) return true;
  std::string lower;
  for (char ch : s) lower.push_back(static_cast<char>(std::tolower(ch)));
  return lower == "nan" || lower == "na" || lower == "?";
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

bool parse_index(const std::string& s, std::size_t& out) {
  if (s.empty()) return false;
  for (char ch : s)
    if (!std::isdigit(static_cast<unsigned char>(ch))) return false;
  out = static_cast<std::size_t>(std::stoull(s));
  return true;
}

}  // namespace

std::vector<double> Dataset::column(std::size_t c) const {
  std::vector<double> out(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = at(r, c);
  return out;
}

std::vector<double> Dataset::row(std::size_t r) const {
  return std::vector<double>(x.begin() + static_cast<long>(r * n_features),
                             x.begin() + static_cast<long>((r + 1) * n_features));
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int y : labels) counts[static_cast<std::size_t>(y)] += 1;
  return counts;
}

void Dataset::validate() const {
  if (n_rows < 1) throw DataError("dataset must have at least one row");
  if (n_features < 2) throw DataError("dataset must have at least two features");
  if (n_classes() < 2) throw DataError("dataset must have at least two classes");
  if (labels.size() != n_rows) throw DataError("one label per row required");
  if (x.size() != n_rows * n_features) throw DataError("feature matrix size mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes())
      throw DataError("label out of range [0, C)");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("dataset contains non-finite values");
  }
  if (feature_names.size() != n_features)
    throw DataError("one feature name per column required");
  std::set<std::string> uniq(feature_names.begin(), feature_names.end());
  if (uniq.size() != n_features) throw DataError("feature names must be unique");
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);

  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t file_line = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++file_line;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = split_csv_line(line);
    if (options.has_header && header.empty()) {
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  const std::size_t n_cols = (options.has_header ? header.size() : rows[0].size());
  if (n_cols < 2) throw DataError(path + ": need a label column and at least one feature");
  if (!options.has_header) {
    header.resize(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) header[c] = "f" + std::to_string(c);
  }

  std::size_t label_idx = n_cols;
  if (std::size_t idx; parse_index(label_column, idx)) {
    if (idx >= n_cols)
      throw DataError(path + ": label column index " + label_column + " out of range");
    label_idx = idx;
  } else {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (header[c] == label_column) {
        label_idx = c;
        break;
      }
    }
    if (label_idx == n_cols)
      throw DataError(path + ": label column '" + label_column + "' not found");
  }

  Dataset d;
  d.n_rows = rows.size();
  d.n_features = n_cols - 1;
  if (d.n_features < 2)
    throw DataError(path + ": need at least two feature columns");
  d.x.assign(d.n_rows * d.n_features, 0.0);
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c != label_idx) d.feature_names.push_back(header[c]);
  }

  std::vector<std::string> raw_labels(d.n_rows);
  std::vector<std::pair<std::size_t, std::size_t>> missing;  // (row, feature col)
  for (std::size_t r = 0; r < d.n_rows; ++r) {
    const auto& cells = rows[r];
    const std::size_t line_no = r + 1 + (options.has_header ? 1 : 0);
    if (cells.size() != n_cols)
      throw DataError(path + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(n_cols));
    std::size_t fc = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (c == label_idx) {
        if (is_missing_cell(cells[c]))
          throw DataError(path + ": missing label at line " + std::to_string(line_no));
        raw_labels[r] = cells[c];
        continue;
      }
      if (is_missing_cell(cells[c])) {
        if (!options.impute_missing)
          throw DataError(path + ": missing value at line " + std::to_string(line_no) +
                          ", column '" + header[c] + "' (enable imputation to accept)");
        missing.emplace_back(r, fc);
        d.at(r, fc) = std::numeric_limits<double>::quiet_NaN();
        ++fc;
        continue;
      }
      const auto v = parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw DataError(path + ": cannot parse '" + cells[c] + "' as a number at line " +
                        std::to_string(line_no) + ", column '" + header[c] + "'");
      d.at(r, fc) = *v;
      ++fc;
    }
  }

  if (!missing.empty()) {
    for (std::size_t c = 0; c < d.n_features; ++c) {
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = 0; r < d.n_rows; ++r) {
        const double v = d.at(r, c);
        if (std::isfinite(v)) {
          sum += v;
          ++n;
        }
      }
      if (n == 0)
        throw DataError(path + ": column '" + d.feature_names[c] +
                        "' has no finite values to impute from");
      const double mean = sum / static_cast<double>(n);
      for (std::size_t r = 0; r < d.n_rows; ++r) {
        if (!std::isfinite(d.at(r, c))) d.at(r, c) = mean;
      }
    }
  }

  // Label vocabulary: numeric labels sort by value, otherwise lexicographic.
  std::vector<std::string> vocab(raw_labels);
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  const bool all_numeric = std::all_of(vocab.begin(), vocab.end(), [](const std::string& s) {
    return parse_double(s).has_value();
  });
  if (all_numeric) {
    std::sort(vocab.begin(), vocab.end(), [](const std::string& a, const std::string& b) {
      return *parse_double(a) < *parse_double(b);
    });
  }
  if (vocab.size() < 2)
    throw DataError(path + ": only one class present in label column");
  std::map<std::string, int> label_to_id;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    label_to_id[vocab[i]] = static_cast<int>(i);
  d.class_names = vocab;
  d.labels.resize(d.n_rows);
  for (std::size_t r = 0; r < d.n_rows; ++r)
    d.labels[r] = label_to_id[raw_labels[r]];

  d.validate();
  return d;
}

std::string dataset_fingerprint(const Dataset& d) {
  std::ostringstream out;
  out << "N=" << d.n_rows << " m=" << d.n_features << " C=" << d.n_classes()
      << " per-class=[";
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c) out << ",";
    out << d.class_names[c] << ":" << counts[c];
  }
  out << "]";
  return out.str();
}

std::uint64_t dataset_content_hash(const Dataset& d) {
  std::uint64_t h = fnv1a64(d.x.data(), d.x.size() * sizeof(double));
  h = fnv1a64(d.labels.data(), d.labels.size() * sizeof(int), h);
  for (const auto& s : d.feature_names) h = fnv1a64(s, h);
  for (const auto& s : d.class_names) h = fnv1a64(s, h);
  return h;
}

std::pair<Dataset, ScalerStats> standardize(const Dataset& d) {
  ScalerStats stats;
  stats.mean.resize(d.n_features);
  stats.stddev.resize(d.n_features);
  stats.zero_variance.resize(d.n_features);
  Dataset out = d;
  const double n = static_cast<double>(d.n_rows);
  for (std::size_t c = 0; c < d.n_features; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < d.n_rows; ++r) sum += d.at(r, c);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < d.n_rows; ++r) {
      const double dv = d.at(r, c) - mean;
      ss += dv * dv;
    }
    double sd = std::sqrt(ss / n);
    const bool degenerate = !(sd > 0.0);
    if (degenerate) sd = 1.0;
    stats.mean[c] = mean;
    stats.stddev[c] = sd;
    stats.zero_variance[c] = degenerate;
    for (std::size_t r = 0; r < d.n_rows; ++r)
      out.at(r, c) = (d.at(r, c) - mean) / sd;
  }
  return {std::move(out), std::move(stats)};
}

Dataset apply_scaler(const Dataset& d, const ScalerStats& stats) {
  if (stats.mean.size() != d.n_features)
    throw DataError("scaler width does not match dataset");
  Dataset out = d;
  for (std::size_t c = 0; c < d.n_features; ++c)
    for (std::size_t r = 0; r < d.n_rows; ++r)
      out.at(r, c) = (d.at(r, c) - stats.mean[c]) / stats.stddev[c];
  return out;
}

Dataset inverse_scaler(const Dataset& d, const ScalerStats& stats) {
  if (stats.mean.size() != d.n_features)
    throw DataError("scaler width does not match dataset");
  Dataset out = d;
  for (std::size_t c = 0; c < d.n_features; ++c)
    for (std::size_t r = 0; r < d.n_rows; ++r)
      out.at(r, c) = d.at(r, c) * stats.stddev[c] + stats.mean[c];
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.n_rows = rows.size();
  out.n_features = d.n_features;
  out.feature_names = d.feature_names;
  out.class_names = d.class_names;
  out.x.resize(rows.size() * d.n_features);
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= d.n_rows) throw DataError("row index out of range");
    std::copy_n(&d.x[r * d.n_features], d.n_features, &out.x[i * d.n_features]);
    out.labels[i] = d.labels[r];
  }
  return out;
}

std::vector<FoldSplit> stratified_kfold(const Dataset& d, std::size_t k,
                                        std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2");
  d.validate();
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < k)
      throw DataError("class '" + d.class_names[c] + "' has " +
                      std::to_string(counts[c]) + " members, fewer than k=" +
                      std::to_string(k));
  }

  std::vector<std::vector<std::size_t>> by_class(d.n_classes());
  for (std::size_t r = 0; r < d.n_rows; ++r)
    by_class[static_cast<std::size_t>(d.labels[r])].push_back(r);

  RngStream rng = derive_stream(seed, 0x666f6c64ull /* "fold" */, k);
  std::vector<std::vector<std::size_t>> test_sets(k);
  // Deal each class's shuffled indices around the fold circle, carrying the
  // offset across classes so fold sizes stay within one of each other.
  std::size_t offset = 0;
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t t = 0; t < members.size(); ++t)
      test_sets[(offset + t) % k].push_back(members[t]);
    offset = (offset + members.size()) % k;
  }

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].fold_index = f;
    std::sort(test_sets[f].begin(), test_sets[f].end());
    folds[f].test_indices = test_sets[f];
    folds[f].train_indices.reserve(d.n_rows - test_sets[f].size());
    std::size_t cursor = 0;
    for (std::size_t r = 0; r < d.n_rows; ++r) {
      if (cursor < test_sets[f].size() && test_sets[f][cursor] == r) {
        ++cursor;
      } else {
        folds[f].train_indices.push_back(r);
      }
    }
  }
  return folds;
}

Dataset make_synthetic(std::size_t n, std::size_t m, std::size_t classes,
                       std::size_t redundancy_groups, double noise,
                       std::uint64_t seed) {
  if (n < 1 || m < 2 || classes < 2)
    throw ConfigError("make_synthetic: need n >= 1, m >= 2, c >= 2");
  if (redundancy_groups < 1 || redundancy_groups > m)
    throw ConfigError("make_synthetic: need m >= redundancy_groups >= 1");
  if (noise < 0.0) throw ConfigError("make_synthetic: noise must be >= 0");

  RngStream rng = derive_stream(seed, 0x73796e7468ull /* "synth" */);
  constexpr double kClassMeanSpread = 3.0;

  Dataset d;
  d.n_rows = n;
  d.n_features = m;
  d.x.assign(n * m, 0.0);
  d.labels.resize(n);
  for (std::size_t c = 0; c < classes; ++c)
    d.class_names.push_back("class_" + std::to_string(c));
  for (std::size_t j = 0; j < m; ++j)
    d.feature_names.push_back("f" + std::to_string(j));

  // class-conditional means per informative base signal
  std::vector<double> mu(classes * redundancy_groups);
  for (auto& v : mu) v = kClassMeanSpread * rng.normal();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < n; ++i)
    d.labels[order[i]] = static_cast<int>(i % classes);

  // contiguous group layout: group g covers [g*m/G, (g+1)*m/G)
  std::vector<std::size_t> group_of(m);
  for (std::size_t j = 0; j < m; ++j)
    group_of[j] = j * redundancy_groups / m;

  for (std::size_t r = 0; r < n; ++r) {
    const auto y = static_cast<std::size_t>(d.labels[r]);
    std::vector<double> base(redundancy_groups);
    for (std::size_t g = 0; g < redundancy_groups; ++g)
      base[g] = mu[y * redundancy_groups + g] + rng.normal();
    for (std::size_t j = 0; j < m; ++j)
      d.at(r, j) = base[group_of[j]] + noise * rng.normal();
  }
  d.validate();
  return d;
}

FeatureTable load_feature_csv(const std::string& path, bool has_header,
                              const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  FeatureTable table;
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = split_csv_line(line);
    if (has_header && header.empty()) {
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  const std::size_t n_cols = has_header ? header.size() : rows[0].size();
  if (!has_header) {
    header.resize(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) header[c] = "f" + std::to_string(c);
  }
  std::size_t label_idx = n_cols;
  if (!label_column.empty()) {
    if (std::size_t idx; parse_index(label_column, idx) && idx < n_cols) {
      label_idx = idx;
    } else {
      for (std::size_t c = 0; c < n_cols; ++c) {
        if (header[c] == label_column) {
          label_idx = c;
          break;
        }
      }
    }
  }
  const bool has_label = label_idx < n_cols;
  table.n_rows = rows.size();
  table.n_cols = n_cols - (has_label ? 1 : 0);
  table.x.assign(table.n_rows * table.n_cols, 0.0);
  for (std::size_t c = 0; c < n_cols; ++c)
    if (c != label_idx) table.feature_names.push_back(header[c]);
  if (has_label) table.raw_labels.resize(table.n_rows);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n_cols)
      throw DataError(path + ": row " + std::to_string(r + 1) +
                      " has an unexpected cell count");
    std::size_t fc = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (c == label_idx) {
        table.raw_labels[r] = rows[r][c];
        continue;
      }
      const auto v = parse_double(rows[r][c]);
      if (!v || !std::isfinite(*v))
        throw DataError(path + ": cannot parse '" + rows[r][c] +
                        "' as a number in column '" + header[c] + "'");
      table.x[r * table.n_cols + fc] = *v;
      ++fc;
    }
  }
  return table;
}

void save_csv(const Dataset& d, const std::string& path,
              const std::string& label_column_name) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& name : d.feature_names) out << name << ",";
  out << label_column_name << "\n";
  char buf[64];
  for (std::size_t r = 0; r < d.n_rows; ++r) {
    for (std::size_t c = 0; c < d.n_features; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.at(r, c));
      out << buf << ",";
    }
    out << d.class_names[static_cast<std::size_t>(d.labels[r])] << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace zayan::tab
