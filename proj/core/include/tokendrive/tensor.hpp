#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tokendrive {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. All model math in the project is done in
// 64-bit precision so finite-difference gradient checks are meaningful.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// height x width x channels tensor, channel-minor layout.
struct Tensor3 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> a;

  Tensor3() = default;
  Tensor3(int hh, int ww, int cc)
      : h(hh), w(ww), c(cc), a(static_cast<size_t>(hh) * ww * cc, 0.0) {}

  double& at(int i, int j, int k) { return a[(static_cast<size_t>(i) * w + j) * c + k]; }
  double at(int i, int j, int k) const { return a[(static_cast<size_t>(i) * w + j) * c + k]; }
  size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// C = A * B, or C += A * B when accumulate is set.
inline void matmul(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.cols != B.rows) throw ShapeMismatch("matmul: inner dimensions differ");
  if (C.rows != A.rows || C.cols != B.cols) C = Mat(A.rows, B.cols);
  if (!accumulate) C.zero();
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int k = 0; k < A.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

// C = A * B^T (or +=).
inline void matmul_nt(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.cols != B.cols) throw ShapeMismatch("matmul_nt: inner dimensions differ");
  if (C.rows != A.rows || C.cols != B.rows) C = Mat(A.rows, B.rows);
  if (!accumulate) C.zero();
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = B.row(j);
      double s = accumulate ? crow[j] : 0.0;
      if (!accumulate) s = crow[j];
      for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
}

// C = A^T * B (or +=).
inline void matmul_tn(const Mat& A, const Mat& B, Mat& C, bool accumulate = false) {
  if (A.rows != B.rows) throw ShapeMismatch("matmul_tn: inner dimensions differ");
  if (C.rows != A.cols || C.cols != B.cols) C = Mat(A.cols, B.cols);
  if (!accumulate) C.zero();
  for (int k = 0; k < A.rows; ++k) {
    const double* arow = A.row(k);
    const double* brow = B.row(k);
    for (int i = 0; i < A.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = C.row(i);
      for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

inline void add_row_bias(Mat& m, const std::vector<double>& b) {
  assert(static_cast<int>(b.size()) == m.cols);
  for (int i = 0; i < m.rows; ++i) {
    double* row = m.row(i);
    for (int j = 0; j < m.cols; ++j) row[j] += b[j];
  }
}

template <typename Container>
inline bool all_finite(const Container& c) {
  for (double v : c)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void check_finite(const std::vector<double>& v, const char* what) {
  if (!all_finite(v)) throw NonFinite(what);
}

}  // namespace tokendrive
