#include "doctest.h"

#include <cmath>
#include <set>

#include "test_support.hpp"
#include "zayan/data.hpp"

using namespace zayan;
using namespace zayan::tab;
using test_support::TempDir;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("load_csv builds a dataset with remapped labels") {
  TempDir tmp("csv");
  const auto path = tmp.write("toy.csv",
                              "a,b,y\n"
                              "1.0,2.0,cat\n"
                              "2.0,3.0,dog\n"
                              "3.0,4.0,cat\n"
                              "4.0,5.0,dog\n");
  const auto d = load_csv(path, "y");
  CHECK(d.n_rows == 4);
  CHECK(d.n_features == 2);
  CHECK(d.n_classes() == 2);
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.labels == std::vector<int>{0, 1, 0, 1});
  CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(d.at(2, 1) == doctest::Approx(4.0));
}

TEST_CASE("load_csv reports the offending row and column on parse failure") {
  TempDir tmp("csv_bad");
  const auto path = tmp.write("bad.csv",
                              "a,b,y\n"
                              "1.0,2.0,0\n"
                              "1.5,abc,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "y"),
                       doctest::Contains("line 3"), DataError);
  CHECK_THROWS_WITH_AS(load_csv(path, "y"),
                       doctest::Contains("column 'b'"), DataError);
}

TEST_CASE("load_csv rejects a missing label column and single-class data") {
  TempDir tmp("csv_label");
  const auto path = tmp.write("toy.csv", "a,b,y\n1,2,0\n3,4,1\n");
  CHECK_THROWS_AS(load_csv(path, "nope"), DataError);
  const auto single = tmp.write("single.csv", "a,b,y\n1,2,0\n3,4,0\n");
  CHECK_THROWS_WITH_AS(load_csv(single, "y"),
                       doctest::Contains("one class"), DataError);
}

TEST_CASE("load_csv accepts a label column given by index and headerless files") {
  TempDir tmp("csv_idx");
  const auto path = tmp.write("toy.csv", "0,1.0,2.0\n1,3.0,4.0\n");
  CsvOptions opt;
  opt.has_header = false;
  const auto d = load_csv(path, "0", opt);
  CHECK(d.n_features == 2);
  CHECK(d.class_names == std::vector<std::string>{"0", "1"});
  CHECK(d.feature_names == std::vector<std::string>{"f1", "f2"});
}

TEST_CASE("load_csv missing values: rejected by default, mean-imputed on request") {
  TempDir tmp("csv_missing");
  const auto path = tmp.write("gap.csv", "a,b,y\n1.0,,0\n3.0,4.0,1\n5.0,8.0,0\n");
  CHECK_THROWS_AS(load_csv(path, "y"), DataError);
  CsvOptions opt;
  opt.impute_missing = true;
  const auto d = load_csv(path, "y", opt);
  CHECK(d.at(0, 1) == doctest::Approx(6.0));  // mean of 4 and 8
}

TEST_CASE("standardize matches the closed-form population z-score") {
  Dataset d;
  d.n_rows = 3;
  d.n_features = 2;
  d.x = {1.0, 5.0, 2.0, 5.0, 3.0, 5.0};
  d.labels = {0, 1, 0};
  d.feature_names = {"v", "const"};
  d.class_names = {"a", "b"};
  const auto [z, stats] = standardize(d);
  CHECK(z.at(0, 0) == doctest::Approx(-1.224744871391589).epsilon(1e-9));
  CHECK(z.at(1, 0) == doctest::Approx(0.0));
  CHECK(z.at(2, 0) == doctest::Approx(1.224744871391589).epsilon(1e-9));
  // constant column becomes zeros with stddev recorded as 1 and flagged
  CHECK(z.at(0, 1) == 0.0);
  CHECK(stats.stddev[1] == 1.0);
  CHECK(stats.zero_variance[1]);
  CHECK_FALSE(stats.zero_variance[0]);

  SUBCASE("standardizing an already standardized column is the identity") {
    const auto [z2, stats2] = standardize(z);
    for (std::size_t i = 0; i < z.x.size(); ++i)
      CHECK(z2.x[i] == doctest::Approx(z.x[i]).epsilon(1e-6));
  }
  SUBCASE("inverse transform reproduces the input within 1e-9") {
    const auto back = inverse_scaler(z, stats);
    for (std::size_t i = 0; i < d.x.size(); ++i)
      CHECK(back.x[i] == doctest::Approx(d.x[i]).epsilon(1e-9));
  }
}

TEST_CASE("standardize round-trips random data within 1e-9 per cell") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = make_synthetic(50, 7, 3, 2, 0.3, seed);
    const auto [z, stats] = standardize(d);
    const auto back = inverse_scaler(z, stats);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i)
      worst = std::max(worst, std::abs(back.x[i] - d.x[i]));
    CHECK(worst < 1e-9);
    for (std::size_t c = 0; c < z.n_features; ++c) {
      double mu = 0.0, ss = 0.0;
      for (std::size_t r = 0; r < z.n_rows; ++r) mu += z.at(r, c);
      mu /= static_cast<double>(z.n_rows);
      for (std::size_t r = 0; r < z.n_rows; ++r)
        ss += (z.at(r, c) - mu) * (z.at(r, c) - mu);
      const double sd = std::sqrt(ss / static_cast<double>(z.n_rows));
      CHECK(std::abs(mu) < 1e-6);
      CHECK(std::abs(sd - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("stratified k-fold: balanced two-class case puts one of each class per fold") {
  Dataset d = make_synthetic(10, 3, 2, 1, 0.1, 3);
  // force exactly balanced labels
  for (std::size_t r = 0; r < 10; ++r) d.labels[r] = static_cast<int>(r % 2);
  const auto folds = stratified_kfold(d, 5, 11);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.test_indices.size() == 2);
    CHECK(d.labels[f.test_indices[0]] + d.labels[f.test_indices[1]] == 1);
  }
}

TEST_CASE("stratified k-fold is deterministic and errors on small classes") {
  const auto d = make_synthetic(40, 4, 2, 2, 0.2, 5);
  const auto a = stratified_kfold(d, 4, 9);
  const auto b = stratified_kfold(d, 4, 9);
  for (std::size_t f = 0; f < a.size(); ++f) {
    CHECK(a[f].test_indices == b[f].test_indices);
    CHECK(a[f].train_indices == b[f].train_indices);
  }

  Dataset small = make_synthetic(9, 3, 2, 1, 0.1, 7);
  for (std::size_t r = 0; r < 9; ++r) small.labels[r] = r < 5 ? 0 : 1;
  CHECK_THROWS_WITH_AS(stratified_kfold(small, 5, 1),
                       doctest::Contains("fewer than k"), DataError);
}

TEST_CASE("fold partition covers every row exactly once with tight stratification") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const std::size_t n = 97 + seed * 13;
    const auto d = make_synthetic(n, 5, 3, 2, 0.4, seed);
    const std::size_t k = 2 + seed % 4;
    const auto folds = stratified_kfold(d, k, seed * 31);
    std::vector<int> seen(d.n_rows, 0);
    for (const auto& f : folds) {
      for (auto r : f.test_indices) seen[r] += 1;
      std::set<std::size_t> train(f.train_indices.begin(), f.train_indices.end());
      for (auto r : f.test_indices) CHECK(train.count(r) == 0);
      CHECK(f.test_indices.size() + f.train_indices.size() == d.n_rows);
    }
    for (auto s : seen) CHECK(s == 1);

    const auto counts = d.class_counts();
    std::size_t min_fold = d.n_rows, max_fold = 0;
    for (const auto& f : folds) {
      min_fold = std::min(min_fold, f.test_indices.size());
      max_fold = std::max(max_fold, f.test_indices.size());
      std::vector<std::size_t> per_class(d.n_classes(), 0);
      for (auto r : f.test_indices)
        per_class[static_cast<std::size_t>(d.labels[r])] += 1;
      for (std::size_t c = 0; c < counts.size(); ++c) {
        const std::size_t base = counts[c] / k;
        CHECK(per_class[c] >= base);
        CHECK(per_class[c] <= base + 1);
      }
    }
    CHECK(max_fold - min_fold <= 1);
  }
}

TEST_CASE("five folds of 523 rows have test sizes {105,105,105,104,104}") {
  const auto d = make_synthetic(523, 4, 4, 2, 0.3, 17);
  const auto folds = stratified_kfold(d, 5, 42);
  std::multiset<std::size_t> sizes;
  for (const auto& f : folds) sizes.insert(f.test_indices.size());
  CHECK(sizes == std::multiset<std::size_t>{104, 104, 105, 105, 105});
}

TEST_CASE("make_synthetic produces correlated redundancy groups") {
  const auto d = make_synthetic(200, 10, 2, 2, 0.05, 21);
  CHECK(d.n_rows == 200);
  CHECK(d.n_features == 10);
  // contiguous groups of 5; check within-group correlation
  for (std::size_t g = 0; g < 2; ++g) {
    const auto base = d.column(g * 5);
    for (std::size_t j = 1; j < 5; ++j) {
      CHECK(pearson(base, d.column(g * 5 + j)) > 0.9);
    }
  }
}

TEST_CASE("make_synthetic zero-noise groups are exactly identical") {
  const auto d = make_synthetic(50, 6, 2, 1, 0.0, 33);
  const auto base = d.column(0);
  for (std::size_t j = 1; j < 6; ++j) CHECK(d.column(j) == base);
}

TEST_CASE("make_synthetic is bitwise deterministic given the seed") {
  const auto a = make_synthetic(64, 8, 3, 4, 0.2, 77);
  const auto b = make_synthetic(64, 8, 3, 4, 0.2, 77);
  CHECK(a.x == b.x);
  CHECK(a.labels == b.labels);
  const auto c = make_synthetic(64, 8, 3, 4, 0.2, 78);
  CHECK(a.x != c.x);
}

TEST_CASE("make_synthetic validates its shape arguments") {
  CHECK_THROWS_AS(make_synthetic(10, 4, 2, 5, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(make_synthetic(10, 1, 2, 1, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(make_synthetic(10, 4, 1, 1, 0.1, 1), ConfigError);
}

TEST_CASE("csv save/load round trip preserves values and labels") {
  TempDir tmp("csv_rt");
  const auto d = make_synthetic(30, 5, 3, 2, 0.2, 9);
  const auto path = tmp.file("rt.csv");
  save_csv(d, path);
  const auto back = load_csv(path, "label");
  CHECK(back.n_rows == d.n_rows);
  CHECK(back.labels == d.labels);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i)
    worst = std::max(worst, std::abs(back.x[i] - d.x[i]));
  CHECK(worst == 0.0);  // %.17g round-trips doubles exactly
}
