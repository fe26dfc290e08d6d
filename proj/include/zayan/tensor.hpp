#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "zayan/common.hpp"

namespace zayan::nn {

// Dense row-major tensor of doubles. The graph ops below only ever build
// rank-1/rank-2 shapes; higher ranks are carried as (rows, cols) with an
// external interpretation (e.g. batched token blocks).
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::initializer_list<std::size_t> d)
      : dims(d), v(count(dims), 0.0) {}
  explicit Tensor(std::vector<std::size_t> d)
      : dims(std::move(d)), v(count(dims), 0.0) {}

  static std::size_t count(const std::vector<std::size_t>& d) {
    std::size_t n = 1;
    for (auto x : d) n *= x;
    return d.empty() ? 0 : n;
  }

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }
  static Tensor scalar(double x) {
    Tensor t({1, 1});
    t.v[0] = x;
    return t;
  }
  static Tensor row(const std::vector<double>& data) {
    Tensor t({1, data.size()});
    t.v = data;
    return t;
  }
  static Tensor column(const std::vector<double>& data) {
    Tensor t({data.size(), 1});
    t.v = data;
    return t;
  }
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> data) {
    Tensor t;
    t.dims = {r, c};
    t.v = std::move(data);
    return t;
  }

  std::size_t size() const { return v.size(); }
  bool is_scalar() const { return size() == 1; }
  std::size_t rows() const { return dims.empty() ? 0 : dims[0]; }
  std::size_t cols() const { return dims.size() < 2 ? 1 : dims[1]; }

  double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace zayan::nn
