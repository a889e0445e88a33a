#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpgn {

using Rng = std::mt19937_64;

// Dense row-major tensor of doubles. Ranks 1..4 are used in practice; all
// layout arithmetic lives in the kernels, this is storage plus shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) throw std::invalid_argument("tensor: shape/data mismatch");
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != size()) throw std::invalid_argument("tensor: reshape element count");
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

inline std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.rank(); ++i) s += (i ? "x" : "") + std::to_string(t.dim(i));
  return s + "]";
}

}  // namespace dpgn
