#include "core/numerics.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace brm {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double log_sigmoid(double z) {
  if (!std::isfinite(z)) {
    throw UsageError("log_sigmoid: non-finite input");
  }
  if (z >= 0.0) {
    return -std::log1p(std::exp(-z));
  }
  return z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vec matvec(const Matrix& m, std::span<const double> x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: matrix cols " + std::to_string(m.cols()) +
                     " vs vector length " + std::to_string(x.size()));
  }
  Vec y(m.rows(), 0.0);
  const double* row = m.data();
  for (std::size_t i = 0; i < m.rows(); ++i, row += m.cols()) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Vec matvec_t(const Matrix& m, std::span<const double> x) {
  if (m.rows() != x.size()) {
    throw ShapeError("matvec_t: matrix rows " + std::to_string(m.rows()) +
                     " vs vector length " + std::to_string(x.size()));
  }
  Vec y(m.cols(), 0.0);
  const double* row = m.data();
  for (std::size_t i = 0; i < m.rows(); ++i, row += m.cols()) {
    const double xi = x[i];
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += row[j] * xi;
  }
  return y;
}

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double acc = 0.0;
    for (double v : xs) acc += v;
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

bool all_finite(std::span<const double> xs) {
  for (double v : xs) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix cholesky_spd(const Matrix& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) {
    throw ShapeError("cholesky_spd: matrix is " + std::to_string(n) + "x" +
                     std::to_string(m.cols()) + ", expected square");
  }
  if (!all_finite(std::span<const double>(m.data(), n * n))) {
    throw UsageError("cholesky_spd: non-finite entries");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-10) {
        throw UsageError("cholesky_spd: matrix not symmetric at (" + std::to_string(i) +
                         "," + std::to_string(j) + "), |delta| = " +
                         std::to_string(std::abs(m(i, j) - m(j, i))));
      }
    }
  }

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) {
      throw FactorizationError("cholesky_spd: non-positive pivot " + std::to_string(diag) +
                                   " at index " + std::to_string(j),
                               j);
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = m(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

Vec solve_cholesky(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) {
    throw ShapeError("solve_cholesky: rhs length " + std::to_string(b.size()) +
                     " vs factor size " + std::to_string(n));
  }
  // L y = b
  Vec y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = b[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * y[k];
    y[i] = acc / l(i, i);
  }
  // L^T x = y
  Vec x(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * x[k];
    x[ii] = acc / l(ii, ii);
  }
  return x;
}

Vec solve_spd(const Matrix& m, std::span<const double> b) {
  return solve_cholesky(cholesky_spd(m), b);
}

Matrix invert_spd(const Matrix& m) {
  const std::size_t n = m.rows();
  const Matrix l = cholesky_spd(m);
  Matrix inv(n, n);
  Vec e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    Vec col = solve_cholesky(l, e);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  // Symmetrize away the last bits of solve asymmetry.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  }
  return inv;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t Rng::derive_seed(std::uint64_t master, std::uint64_t k) {
  std::uint64_t x = master + k * 0x9E3779B97F4A7C15ull;
  return splitmix64(x);
}

}  // namespace brm
