#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "casenbr/errors.hpp"

namespace casenbr {

/// Dense row-major matrix. Vectors are 1×n or n×1; scalars are 1×1.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("tensor value count " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string());
    }
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    Tensor t;
    t.rows_ = rows.size();
    t.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    t.data_.reserve(t.rows_ * t.cols_);
    for (const auto& r : rows) {
      if (r.size() != t.cols_) throw ShapeError("ragged initializer for tensor");
      t.data_.insert(t.data_.end(), r.begin(), r.end());
    }
    return t;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  [[nodiscard]] bool same_shape(const Tensor& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

}  // namespace casenbr
