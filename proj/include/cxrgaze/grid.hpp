// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cxrgaze/errors.hpp"

namespace cxrgaze {

// Row-major 2-D value grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked(height, width)), fill) {}
  Grid(int height, int width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(checked(height, width)))
      throw ShapeError("grid data size does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& raw() const { return data_; }
  std::vector<T>& raw() { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static long long checked(int h, int w) {
    if (h < 0 || w < 0) throw ShapeError("negative grid dimension");
    return static_cast<long long>(h) * w;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using GridF = Grid<float>;
using GridD = Grid<double>;

}  // namespace cxrgaze
