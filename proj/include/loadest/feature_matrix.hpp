#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "loadest/core.hpp"

namespace loadest {

/// Dense row-major matrix of context vectors.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t cols) : cols_(cols) {}

  std::size_t rows() const noexcept { return cols_ == 0 ? 0 : data_.size() / cols_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  void append(std::span<const double> values) {
    if (values.size() != cols_) throw InputError("FeatureMatrix: row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
  }
  void append(const FeatureMatrix& other) {
    if (other.cols_ != cols_) throw InputError("FeatureMatrix: column mismatch");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  }
  void reserve_rows(std::size_t n) { data_.reserve(n * cols_); }

  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace loadest
