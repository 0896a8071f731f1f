// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace mucrasp {

// Dense row-major matrix of doubles. Rows are positions or output channels
// depending on context; all heavy kernels below stream contiguous rows.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// y = x * w^T for w stored [out x in]. Packs w transposed once so the inner
// loop is a contiguous axpy (accumulation order over i is fixed: ascending).
inline void linear_fwd(const Matrix& x, const Matrix& w, Matrix& y) {
  assert(x.cols == w.cols);
  y = Matrix(x.rows, w.rows);
  const int in = w.cols, out = w.rows;
  std::vector<double> wt(static_cast<size_t>(in) * out);
  for (int o = 0; o < out; ++o) {
    const double* wr = w.row(o);
    for (int i = 0; i < in; ++i) wt[static_cast<size_t>(i) * out + o] = wr[i];
  }
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wtr = wt.data() + static_cast<size_t>(i) * out;
      for (int o = 0; o < out; ++o) yr[o] += xi * wtr[o];
    }
  }
}

// y = x * w for w stored [in x out] (used by the output head).
inline void matmul_nn(const Matrix& x, const Matrix& w, Matrix& y) {
  assert(x.cols == w.rows);
  y = Matrix(x.rows, w.cols);
  for (int t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double* yr = y.row(t);
    for (int i = 0; i < w.rows; ++i) {
      const double xi = xr[i];
      const double* wr = w.row(i);
      for (int o = 0; o < w.cols; ++o) yr[o] += xi * wr[o];
    }
  }
}

// dx += dy * w for w stored [out x in]; backward of linear_fwd w.r.t. x.
inline void linear_bwd_input(const Matrix& dy, const Matrix& w, Matrix& dx) {
  assert(dy.cols == w.rows && dx.cols == w.cols && dx.rows == dy.rows);
  for (int t = 0; t < dy.rows; ++t) {
    const double* dyr = dy.row(t);
    double* dxr = dx.row(t);
    for (int o = 0; o < w.rows; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wr = w.row(o);
      for (int i = 0; i < w.cols; ++i) dxr[i] += g * wr[i];
    }
  }
}

// dw += dy^T * x for w stored [out x in]; backward of linear_fwd w.r.t. w.
inline void linear_bwd_weight(const Matrix& dy, const Matrix& x, Matrix& dw) {
  assert(dy.rows == x.rows && dw.rows == dy.cols && dw.cols == x.cols);
  for (int t = 0; t < dy.rows; ++t) {
    const double* dyr = dy.row(t);
    const double* xr = x.row(t);
    for (int o = 0; o < dy.cols; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      double* dwr = dw.row(o);
      for (int i = 0; i < x.cols; ++i) dwr[i] += g * xr[i];
    }
  }
}

// dx += dy * w^T and dw += x^T * dy for w stored [in x out] (output head).
inline void matmul_nn_bwd(const Matrix& dy, const Matrix& x, const Matrix& w,
                          Matrix& dx, Matrix& dw) {
  assert(dy.rows == x.rows && w.rows == x.cols && w.cols == dy.cols);
  for (int t = 0; t < dy.rows; ++t) {
    const double* dyr = dy.row(t);
    bool any = false;
    for (int o = 0; o < dy.cols; ++o) {
      if (dyr[o] != 0.0) { any = true; break; }
    }
    if (!any) continue;  // loss grads are row-sparse: only masked positions
    const double* xr = x.row(t);
    double* dxr = dx.row(t);
    for (int i = 0; i < w.rows; ++i) {
      const double* wr = w.row(i);
      double* dwr = dw.row(i);
      const double xi = xr[i];
      double acc = 0.0;
      for (int o = 0; o < w.cols; ++o) {
        acc += dyr[o] * wr[o];
        dwr[o] += xi * dyr[o];
      }
      dxr[i] += acc;
    }
  }
}

}  // namespace mucrasp
