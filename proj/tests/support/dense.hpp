#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace swinvrnn::testing {

// Row-major square matrices as plain vectors, for oracles independent of torch.
using Dense = std::vector<std::vector<double>>;

inline Dense mat_mul(const Dense& a, const Dense& b) {
  const auto n = a.size(), m = b[0].size(), inner = b.size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < inner; ++t) c[i][j] += a[i][t] * b[t][j];
  return c;
}

inline Dense transpose(const Dense& a) {
  Dense t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// Gauss-Jordan elimination with partial pivoting.
inline Dense inverse(Dense a) {
  const auto n = a.size();
  Dense inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) throw std::runtime_error("singular matrix");
    std::swap(a[pivot], a[col]);
    std::swap(inv[pivot], inv[col]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Determinant by Gaussian elimination with partial pivoting.
inline double determinant(Dense a) {
  const auto n = a.size();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) return 0.0;
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      det = -det;
    }
    det *= a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j < n; ++j) a[r][j] -= f * a[col][j];
    }
  }
  return det;
}

// KL(N(mq, Sq) || N(mp, Sp)) from explicit inverse and determinants.
inline double dense_gaussian_kl(const std::vector<double>& mq, const Dense& sq, const std::vector<double>& mp,
                                const Dense& sp) {
  const auto k = mq.size();
  auto sp_inv = inverse(sp);
  double trace = 0.0;
  auto prod = mat_mul(sp_inv, sq);
  for (std::size_t i = 0; i < k; ++i) trace += prod[i][i];
  double quad = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) quad += (mp[i] - mq[i]) * sp_inv[i][j] * (mp[j] - mq[j]);
  return 0.5 * (trace + quad - static_cast<double>(k) + std::log(determinant(sp)) - std::log(determinant(sq)));
}

}  // namespace swinvrnn::testing
