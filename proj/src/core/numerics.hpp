#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "core/errors.hpp"

namespace brm {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All entries must stay finite; the
// factorization routines below check this on entry.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// log(sigmoid(z)), overflow-free over the whole double range. Result <= 0.
double log_sigmoid(double z);

// Logistic function, evaluated without overflow. No finiteness check.
double sigmoid(double z);

double dot(std::span<const double> a, std::span<const double> b);

// y = M x
Vec matvec(const Matrix& m, std::span<const double> x);
// y = M^T x
Vec matvec_t(const Matrix& m, std::span<const double> x);

// Pairwise (cascade) summation; result independent of chunking choices made
// by callers that split and re-merge ranges.
double pairwise_sum(std::span<const double> xs);

bool all_finite(std::span<const double> xs);

// Lower-triangular L with L L^T = m. Requires m symmetric within 1e-10
// absolute; a non-positive pivot raises FactorizationError naming its index.
Matrix cholesky_spd(const Matrix& m);

// Solves (L L^T) x = b given the factor from cholesky_spd.
Vec solve_cholesky(const Matrix& l, std::span<const double> b);

// Solves m x = b for symmetric positive definite m.
Vec solve_spd(const Matrix& m, std::span<const double> b);

// m^-1 for symmetric positive definite m, via Cholesky column solves.
Matrix invert_spd(const Matrix& m);

// xoshiro256++ seeded through splitmix64. The generator and the derived
// uniform/gaussian streams are fixed by this implementation so datasets
// regenerate identically from a seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via Marsaglia's polar method (cached spare).
  double gaussian();

  // Deterministic sub-stream seed k of a master seed.
  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k);

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace brm
