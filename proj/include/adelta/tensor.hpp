#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adelta/error.hpp"

namespace adelta {

// Row-major dense matrix; rows are token embeddings.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error(ErrorCode::ShapeMismatch, "matrix data length does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A point in a backbone's sample space ("image"). Shape is (height, width,
// channels); values are stored flat in row-major order.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const noexcept { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

struct Sample {
  ImageShape shape;
  std::vector<double> values;

  Sample() = default;
  explicit Sample(ImageShape s) : shape(s), values(s.size(), 0.0) {}
  Sample(ImageShape s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape.size())
      throw Error(ErrorCode::ShapeMismatch, "sample data length does not match its shape");
  }

  bool operator==(const Sample&) const = default;
};

inline void require_same_shape(const Sample& a, const Sample& b) {
  if (a.shape != b.shape || a.values.size() != b.values.size())
    throw Error(ErrorCode::ShapeMismatch, "sample shapes differ");
}

}  // namespace adelta
