#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "podracer/common.hpp"

namespace podracer {

/// Dense row-major matrix of doubles. The only tensor type in the library;
/// vectors are 1xN or Nx1 as convenient.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

inline void check_finite(const Tensor2& t, const char* what) {
  if (!all_finite(t.data.data(), t.data.size())) {
    throw NumericError(std::string(what) + ": non-finite entry");
  }
}

/// C = A * B. Four rows of A are processed per pass so each loaded row of B
/// feeds four accumulator rows; on batched inputs this runs several times
/// faster than a row-at-a-time loop, which is the point of batching rollouts.
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.rows) {
    throw DimensionError("matmul: " + a.shape_str() + " x " + b.shape_str());
  }
  Tensor2 c(a.rows, b.cols);
  const std::size_t n = b.cols;
  std::size_t i = 0;
  for (; i + 4 <= a.rows; i += 4) {
    const double* a0 = a.row(i);
    const double* a1 = a.row(i + 1);
    const double* a2 = a.row(i + 2);
    const double* a3 = a.row(i + 3);
    double* c0 = c.row(i);
    double* c1 = c.row(i + 1);
    double* c2 = c.row(i + 2);
    double* c3 = c.row(i + 3);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double* brow = b.row(k);
      const double w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
      for (std::size_t j = 0; j < n; ++j) {
        const double bkj = brow[j];
        c0[j] += w0 * bkj;
        c1[j] += w1 * bkj;
        c2[j] += w2 * bkj;
        c3[j] += w3 * bkj;
      }
    }
  }
  for (; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// C = A^T * B without materializing the transpose (a sum of row outer
/// products, accumulated four batch rows at a time).
inline Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows) {
    throw DimensionError("matmul_tn: " + a.shape_str() + "^T x " + b.shape_str());
  }
  Tensor2 c(a.cols, b.cols);
  const std::size_t n = b.cols;
  std::size_t k = 0;
  for (; k + 4 <= a.rows; k += 4) {
    const double* a0 = a.row(k);
    const double* a1 = a.row(k + 1);
    const double* a2 = a.row(k + 2);
    const double* a3 = a.row(k + 3);
    const double* b0 = b.row(k);
    const double* b1 = b.row(k + 1);
    const double* b2 = b.row(k + 2);
    const double* b3 = b.row(k + 3);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double w0 = a0[i], w1 = a1[i], w2 = a2[i], w3 = a3[i];
      double* crow = c.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += w0 * b0[j] + w1 * b1[j] + w2 * b2[j] + w3 * b3[j];
      }
    }
  }
  for (; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      double* crow = c.row(i);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

/// C = A * B^T without materializing the transpose.
inline Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.cols) {
    throw DimensionError("matmul_nt: " + a.shape_str() + " x " + b.shape_str() + "^T");
  }
  Tensor2 c(a.rows, b.rows);
  std::size_t i = 0;
  for (; i + 4 <= a.rows; i += 4) {
    const double* a0 = a.row(i);
    const double* a1 = a.row(i + 1);
    const double* a2 = a.row(i + 2);
    const double* a3 = a.row(i + 3);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) {
        const double bjk = brow[k];
        d0 += a0[k] * bjk;
        d1 += a1[k] * bjk;
        d2 += a2[k] * bjk;
        d3 += a3[k] * bjk;
      }
      c.at(i, j) = d0;
      c.at(i + 1, j) = d1;
      c.at(i + 2, j) = d2;
      c.at(i + 3, j) = d3;
    }
  }
  for (; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) dot += arow[k] * brow[k];
      crow[j] = dot;
    }
  }
  return c;
}

/// Adds a length-cols bias vector to every row.
inline void add_row_vector(Tensor2& t, const std::vector<double>& bias) {
  if (bias.size() != t.cols) {
    throw DimensionError("add_row_vector: bias length " + std::to_string(bias.size()) +
                         " vs cols " + std::to_string(t.cols));
  }
  for (std::size_t i = 0; i < t.rows; ++i) {
    double* row = t.row(i);
    for (std::size_t j = 0; j < t.cols; ++j) row[j] += bias[j];
  }
}

/// Column sums, i.e. reduction over the batch dimension.
inline std::vector<double> column_sums(const Tensor2& t) {
  std::vector<double> s(t.cols, 0.0);
  for (std::size_t i = 0; i < t.rows; ++i) {
    const double* row = t.row(i);
    for (std::size_t j = 0; j < t.cols; ++j) s[j] += row[j];
  }
  return s;
}

}  // namespace podracer
