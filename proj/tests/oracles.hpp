#pragma once

// Reference implementations written independently of the library. They favor
// obviousness over speed and only touch Matrix through element access.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "spa/numeric.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const spa::Matrix& m) {
  Dense d(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  }
  return d;
}

inline Dense multiply(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), m = b[0].size(), k = b.size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < k; ++t) c[i][j] += a[i][t] * b[t][j];
    }
  }
  return c;
}

// Householder reduction to tridiagonal form: returns (diagonal, subdiagonal).
inline std::pair<std::vector<double>, std::vector<double>> tridiagonalize(Dense a) {
  const std::size_t n = a.size();
  for (std::size_t k = 0; n >= 3 && k + 2 < n; ++k) {
    std::vector<double> v(n, 0.0);
    double norm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) norm += a[i][k] * a[i][k];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = a[k + 1][k] > 0 ? -norm : norm;
    for (std::size_t i = k + 1; i < n; ++i) v[i] = a[i][k];
    v[k + 1] -= alpha;
    double vn = 0.0;
    for (double x : v) vn += x * x;
    if (vn == 0.0) continue;
    Dense h(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) h[i][j] = (i == j ? 1.0 : 0.0) - 2.0 * v[i] * v[j] / vn;
    }
    a = multiply(multiply(h, a), h);
  }
  std::vector<double> d(n), e(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i][i];
  for (std::size_t i = 0; i + 1 < n; ++i) e[i] = a[i + 1][i];
  return {d, e};
}

// Number of eigenvalues strictly below x (Sturm sequence of leading principal minors).
inline std::size_t count_below(const std::vector<double>& d, const std::vector<double>& e, double x) {
  std::size_t count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double off = i == 0 ? 0.0 : e[i - 1] * e[i - 1];
    q = d[i] - x - (i == 0 ? 0.0 : off / q);
    if (q == 0.0) q = -1e-300;
    if (q < 0.0) ++count;
  }
  return count;
}

// Characteristic-polynomial root finding by bisection, sorted descending.
inline std::vector<double> sym_eigenvalues(const Dense& a, double tol = 1e-13) {
  const std::size_t n = a.size();
  const auto [d, e] = tridiagonalize(a);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::abs(e[i - 1]) : 0.0) + (i + 1 < n ? std::abs(e[i]) : 0.0);
    lo = std::min(lo, d[i] - r);
    hi = std::max(hi, d[i] + r);
  }
  lo -= 1.0;
  hi += 1.0;
  const double scale = std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    // Smallest x with more than j eigenvalues below it.
    double a_lo = lo, a_hi = hi;
    while (a_hi - a_lo > tol * scale) {
      const double mid = 0.5 * (a_lo + a_hi);
      if (count_below(d, e, mid) > j) a_hi = mid; else a_lo = mid;
    }
    out[j] = 0.5 * (a_lo + a_hi);
  }
  std::ranges::sort(out, std::greater<>());
  return out;
}

inline double sq_dist(const spa::Matrix& x, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
  return s;
}

inline double cosine(const spa::Matrix& x, std::size_t i, std::size_t j) {
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    dot += x(i, c) * x(j, c);
    ni += x(i, c) * x(i, c);
    nj += x(j, c) * x(j, c);
  }
  return (ni == 0.0 || nj == 0.0) ? 0.0 : dot / std::sqrt(ni * nj);
}

// k nearest other vertices: smallest squared distance (or largest cosine), ties to lower index.
inline std::vector<std::vector<std::size_t>> knn(const spa::Matrix& x, std::size_t k, bool use_cosine) {
  const std::size_t n = x.rows();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cand.emplace_back(use_cosine ? -cosine(x, i, j) : sq_dist(x, i, j), j);
    }
    std::ranges::sort(cand);
    for (std::size_t t = 0; t < k; ++t) out[i].push_back(cand[t].second);
  }
  return out;
}

// Symmetrized kNN adjacency with an explicit bandwidth (gaussian) or clamped cosine.
inline Dense knn_adjacency(const spa::Matrix& x, std::size_t k, bool use_cosine, double bandwidth) {
  const std::size_t n = x.rows();
  const auto nb = knn(x, k, use_cosine);
  Dense dir(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nb[i]) {
      dir[i][j] = use_cosine ? std::max(0.0, cosine(x, i, j)) : std::exp(-sq_dist(x, i, j) / (2.0 * bandwidth));
    }
  }
  Dense a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = 0.5 * (dir[i][j] + dir[j][i]);
  }
  return a;
}

// Median of all directed kNN squared distances.
inline double median_knn_sq_dist(const spa::Matrix& x, std::size_t k) {
  const auto nb = knn(x, k, false);
  std::vector<double> d;
  for (std::size_t i = 0; i < nb.size(); ++i) {
    for (std::size_t j : nb[i]) d.push_back(sq_dist(x, i, j));
  }
  std::ranges::sort(d);
  const std::size_t m = d.size() / 2;
  return d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
}

// I − D^{−1/2} A D^{−1/2}, with zero-degree rows left as identity rows.
inline Dense sym_laplacian(const Dense& a) {
  const std::size_t n = a.size();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) deg[i] = std::accumulate(a[i].begin(), a[i].end(), 0.0);
  Dense l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double norm = (deg[i] > 0 && deg[j] > 0) ? a[i][j] / std::sqrt(deg[i] * deg[j]) : 0.0;
      l[i][j] = (i == j ? 1.0 : 0.0) - norm;
    }
  }
  return l;
}

// Connected components by depth-first search over positive entries.
inline std::size_t components(const Dense& a) {
  const std::size_t n = a.size();
  std::vector<bool> seen(n, false);
  std::size_t count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++count;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        if (!seen[v] && a[u][v] > 0.0) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
  }
  return count;
}

// Vertices without any positive edge. Under a floored degree they add an
// eigenvalue of 1 to the normalized Laplacian instead of a zero.
inline std::size_t isolated(const Dense& a) {
  std::size_t count = 0;
  for (const auto& row : a) {
    if (std::ranges::none_of(row, [](double w) { return w > 0.0; })) ++count;
  }
  return count;
}

struct Vote {
  std::vector<double> q_hat;
  std::size_t label;
  double confidence;
};

// Exhaustive scan: rank every initialized slot except `self` by inner product
// with the normalized query, keep the top k (ties to lower slot), sum probs.
inline Vote vote(const spa::Matrix& probs, const spa::Matrix& feats, const std::vector<bool>& initialized,
                 const std::vector<double>& query, std::size_t self, std::size_t k) {
  double qn = 0.0;
  for (double v : query) qn += v * v;
  qn = std::sqrt(qn);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t j = 0; j < probs.rows(); ++j) {
    if (j == self || !initialized[j]) continue;
    double dot = 0.0;
    for (std::size_t c = 0; c < feats.cols(); ++c) dot += feats(j, c) * query[c] / qn;
    cand.emplace_back(-dot, j);
  }
  std::ranges::sort(cand);
  std::vector<double> q(probs.cols(), 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t c = 0; c < probs.cols(); ++c) q[c] += probs(cand[t].second, c);
  }
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  for (double& v : q) v /= total;
  std::size_t best = 0;
  for (std::size_t c = 1; c < q.size(); ++c) {
    if (q[c] > q[best]) best = c;
  }
  return {q, best, q[best]};
}

inline spa::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  spa::Matrix m(rows, cols);
  for (double& v : m.data()) v = g(rng);
  return m;
}

inline double rel_error(const spa::Matrix& a, const spa::Matrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace oracle
