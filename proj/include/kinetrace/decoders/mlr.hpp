#pragma once

// Multivariable linear regression decoder: per direction d,
//   k_d[t] = alpha_d + sum_n sum_l beta_d(n, l) E_n[t - l]
// fitted by least squares on [1 X] with a Householder QR factorization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kinetrace/errors.hpp"
#include "kinetrace/matrix.hpp"

namespace kinetrace::decoders {

struct MlrModel {
  std::array<double, 3> alpha{};
  Matrix beta;  // 3 x (L*N)
  bool rank_deficient = false;

  std::size_t input_dim() const noexcept { return beta.cols(); }
};

inline constexpr double kMlrRidge = 1e-8;

namespace detail {

// Solves min ||A theta - B||_F in place. A is m x p (m >= p, full column rank
// required), B is m x k; returns theta (p x k) and the |R_jj| diagonal.
inline Matrix householder_least_squares(Matrix A, Matrix B, std::vector<double>& rdiag) {
  const std::size_t m = A.rows(), p = A.cols(), k = B.cols();
  std::vector<double> v(m), w(std::max(p, k));
  rdiag.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < m; ++i) norm += A(i, j) * A(i, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      rdiag[j] = 0.0;
      continue;
    }
    const double alpha = A(j, j) > 0.0 ? -norm : norm;
    for (std::size_t i = j; i < m; ++i) v[i] = A(i, j);
    v[j] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = j; i < m; ++i) vnorm2 += v[i] * v[i];
    rdiag[j] = std::abs(alpha);
    if (vnorm2 == 0.0) continue;
    // Apply H = I - 2 v v^T / (v^T v) to the trailing columns of A and to B,
    // sweeping rows so memory access stays contiguous.
    auto reflect = [&](Matrix& M, std::size_t first_col) {
      const std::size_t cols = M.cols();
      std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(cols), 0.0);
      for (std::size_t i = j; i < m; ++i) {
        const double vi = v[i];
        const auto row = M.row(i);
        for (std::size_t c = first_col; c < cols; ++c) w[c] += vi * row[c];
      }
      const double s = 2.0 / vnorm2;
      for (std::size_t c = first_col; c < cols; ++c) w[c] *= s;
      for (std::size_t i = j; i < m; ++i) {
        const double vi = v[i];
        auto row = M.row(i);
        for (std::size_t c = first_col; c < cols; ++c) row[c] -= vi * w[c];
      }
    };
    reflect(A, j);
    reflect(B, 0);
  }
  // Back substitution on the upper triangle.
  Matrix theta(p, k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t jj = p; jj-- > 0;) {
      double acc = B(jj, c);
      for (std::size_t q = jj + 1; q < p; ++q) acc -= A(jj, q) * theta(q, c);
      theta(jj, c) = A(jj, jj) != 0.0 ? acc / A(jj, jj) : 0.0;
    }
  return theta;
}

inline Matrix design_with_intercept(const Matrix& X, std::size_t extra_rows) {
  Matrix A(X.rows() + extra_rows, X.cols() + 1);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    A(r, 0) = 1.0;
    const auto src = X.row(r);
    std::copy(src.begin(), src.end(), A.row(r).begin() + 1);
  }
  return A;
}

}  // namespace detail

// Rank deficiency (a pivot below 1e-10 of the largest, or fewer rows than
// columns) switches to ridge regression with lambda 1e-8 on the slopes via an
// augmented system, and sets `rank_deficient`.
inline MlrModel fit_mlr(const Matrix& X, const Matrix& Y) {
  if (X.rows() != Y.rows()) throw ShapeError("fit_mlr: feature and target row counts differ");
  if (Y.cols() != 3) throw ShapeError("fit_mlr: targets must have 3 columns");
  if (X.rows() == 0 || X.cols() == 0) throw ShapeError("fit_mlr: empty feature matrix");
  const std::size_t P = X.cols();
  std::vector<double> rdiag;
  Matrix theta;
  bool deficient = X.rows() < P + 1;
  if (!deficient) {
    theta = detail::householder_least_squares(detail::design_with_intercept(X, 0), Y, rdiag);
    const double top = *std::max_element(rdiag.begin(), rdiag.end());
    deficient = std::any_of(rdiag.begin(), rdiag.end(), [&](double d) { return d <= 1e-10 * top; });
  }
  if (deficient) {
    Matrix A = detail::design_with_intercept(X, P);
    const double s = std::sqrt(kMlrRidge);
    for (std::size_t j = 0; j < P; ++j) A(X.rows() + j, j + 1) = s;
    Matrix B(X.rows() + P, 3);
    std::copy(Y.data().begin(), Y.data().end(), B.data().begin());
    theta = detail::householder_least_squares(std::move(A), std::move(B), rdiag);
  }
  MlrModel model;
  model.rank_deficient = deficient;
  model.beta = Matrix(3, P);
  for (std::size_t d = 0; d < 3; ++d) {
    model.alpha[d] = theta(0, d);
    for (std::size_t j = 0; j < P; ++j) model.beta(d, j) = theta(j + 1, d);
  }
  return model;
}

inline Matrix predict_mlr(const MlrModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim())
    throw ShapeError("predict_mlr: model expects " + std::to_string(model.input_dim()) + " features, got " +
                     std::to_string(X.cols()));
  Matrix out(X.rows(), 3);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto x = X.row(r);
    for (std::size_t d = 0; d < 3; ++d) {
      const auto b = model.beta.row(d);
      double acc = model.alpha[d];
      for (std::size_t j = 0; j < x.size(); ++j) acc += b[j] * x[j];
      out(r, d) = acc;
    }
  }
  return out;
}

}  // namespace kinetrace::decoders
