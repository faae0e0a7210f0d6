#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ayce {

/// Dense row-major matrix of doubles. Embeddings, activations and parameters
/// all use this layout; a (rows x cols) block of an image batch stores each
/// image as one flattened row.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rs);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

inline Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rs) {
  Matrix m;
  m.rows = rs.size();
  m.cols = rs.size() ? rs.begin()->size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rs) m.data.insert(m.data.end(), r.begin(), r.end());
  return m;
}

}  // namespace ayce
