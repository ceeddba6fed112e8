#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace spa {

/// Dense row-major matrix of doubles.
///
/// Constructing from explicit data rejects non-finite values; element access
/// afterwards is unchecked, so intermediate results are the caller's business.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
/// Rows selected by index, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);
bool is_symmetric(const Matrix& m, double tol);

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column i pairs with eigenvalues[i]
};

inline constexpr double kDefaultEigTol = 1e-10;
inline constexpr int kMaxJacobiSweeps = 100;
inline constexpr std::size_t kMaxEigOrder = 512;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Iterates until the off-diagonal Frobenius norm drops below
/// tol·max(1, ‖M‖_F) or throws after kMaxJacobiSweeps sweeps.
EigenDecomposition sym_eig(const Matrix& m, double tol = kDefaultEigTol);

/// Entry (i, j) is ‖xᵢ − xⱼ‖².
Matrix pairwise_sq_dists(const Matrix& x);

/// Scales every nonzero row to unit Euclidean norm; zero rows pass through.
Matrix l2_normalize_rows(const Matrix& x);

/// A scalar loss with its gradient in the loss input.
struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

/// Row-wise softmax, shifted by the row max.
Matrix softmax_rows(const Matrix& logits);

using ScalarFn = std::function<double(const Matrix&)>;

/// Central-difference gradient of f at x with step h.
Matrix finite_diff_grad(const ScalarFn& f, const Matrix& x, double h);

}  // namespace spa
