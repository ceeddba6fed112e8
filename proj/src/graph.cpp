#include "spa/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spa/error.hpp"

namespace spa {

namespace {

void check_knn_args(const Matrix& x, std::size_t k) {
  if (x.rows() < 2) {
    throw Error(ErrorKind::invalid_argument,
                "kNN graph needs at least 2 vertices, got " + std::to_string(x.rows()));
  }
  if (k < 1 || k >= x.rows()) {
    throw Error(ErrorKind::invalid_argument, "invalid k=" + std::to_string(k) + " for " +
                                                 std::to_string(x.rows()) + " vertices");
  }
}

Matrix cosine_raw(const Matrix& x) {
  const Matrix unit = l2_normalize_rows(x);
  return matmul_a_bt(unit, unit);
}

}  // namespace

SimilarityMetric SimilarityMetric::gaussian(std::optional<double> bandwidth) {
  if (bandwidth && !(std::isfinite(*bandwidth) && *bandwidth > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "gaussian bandwidth must be finite and positive");
  }
  return {SimilarityKind::gaussian, bandwidth};
}

std::string_view to_string(SimilarityKind kind) {
  return kind == SimilarityKind::cosine ? "cosine" : "gaussian";
}

std::string_view to_string(LaplacianKind kind) { return kind == LaplacianKind::rwk ? "rwk" : "sym"; }

SimilarityKind parse_similarity_kind(std::string_view text) {
  if (text == "cosine") return SimilarityKind::cosine;
  if (text == "gaussian") return SimilarityKind::gaussian;
  throw Error(ErrorKind::config, "unknown similarity metric '" + std::string(text) + "'");
}

LaplacianKind parse_laplacian_kind(std::string_view text) {
  if (text == "rwk") return LaplacianKind::rwk;
  if (text == "sym") return LaplacianKind::sym;
  throw Error(ErrorKind::config, "unknown laplacian kind '" + std::string(text) + "'");
}

std::vector<std::vector<std::size_t>> select_neighbors(const Matrix& x, std::size_t k,
                                                       SimilarityKind kind) {
  check_knn_args(x, k);
  const std::size_t n = x.rows();
  const bool by_distance = kind == SimilarityKind::gaussian;
  const Matrix score = by_distance ? pairwise_sq_dists(x) : cosine_raw(x);

  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.push_back(j);
    }
    auto better = [&](std::size_t a, std::size_t b) {
      const double sa = score(i, a);
      const double sb = score(i, b);
      if (sa != sb) return by_distance ? sa < sb : sa > sb;
      return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), better);
    out[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

Matrix similarity_matrix(const Matrix& x, const SimilarityMetric& metric) {
  if (metric.kind == SimilarityKind::cosine) {
    Matrix s = cosine_raw(x);
    for (double& v : s.data()) v = std::max(0.0, v);
    return s;
  }
  if (!metric.bandwidth) {
    throw Error(ErrorKind::invalid_argument, "similarity_matrix: gaussian bandwidth unresolved");
  }
  Matrix s = pairwise_sq_dists(x);
  const double denom = 2.0 * *metric.bandwidth;
  for (double& v : s.data()) v = std::exp(-v / denom);
  return s;
}

Graph build_knn_graph(const Matrix& x, std::size_t k, const SimilarityMetric& metric) {
  check_knn_args(x, k);
  Graph g;
  g.n = x.rows();
  g.k = k;
  g.metric = metric;
  if (metric.kind == SimilarityKind::gaussian && !metric.bandwidth) {
    g.metric.bandwidth = median_bandwidth(x, k);
  }
  g.neighbors = select_neighbors(x, k, metric.kind);
  const Matrix sim = similarity_matrix(x, g.metric);

  g.adjacency = Matrix(g.n, g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j : g.neighbors[i]) {
      const double w = 0.5 * sim(i, j);
      g.adjacency(i, j) += w;
      g.adjacency(j, i) += w;
    }
  }
  for (std::size_t i = 0; i < g.n; ++i) g.adjacency(i, i) = 0.0;
  return g;
}

MedianBandwidth median_bandwidth_detail(const Matrix& x, std::size_t k) {
  const auto neighbors = select_neighbors(x, k, SimilarityKind::gaussian);
  const Matrix d = pairwise_sq_dists(x);

  struct Entry {
    double value;
    std::size_t i;
    std::size_t j;
  };
  std::vector<Entry> entries;
  entries.reserve(x.rows() * k);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j : neighbors[i]) entries.push_back({d(i, j), i, j});
  }
  std::ranges::stable_sort(entries, {}, &Entry::value);

  MedianBandwidth out;
  const std::size_t m = entries.size();
  if (m % 2 == 1) {
    out.value = entries[m / 2].value;
    out.pairs = {{entries[m / 2].i, entries[m / 2].j}};
    out.share = 1.0;
  } else {
    const Entry& lo = entries[m / 2 - 1];
    const Entry& hi = entries[m / 2];
    out.value = 0.5 * (lo.value + hi.value);
    out.pairs = {{lo.i, lo.j}, {hi.i, hi.j}};
    out.share = 0.5;
  }
  if (out.value <= 0.0) {
    out.value = kBandwidthFloor;
    out.pairs.clear();
    out.share = 0.0;
  }
  return out;
}

double median_bandwidth(const Matrix& x, std::size_t k) {
  return median_bandwidth_detail(x, k).value;
}

Matrix laplacian_matrix(const Graph& g, LaplacianKind kind) {
  const std::size_t n = g.n;
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += g.adjacency(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(std::max(deg, kDegreeFloor));
  }
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m(i, j) = g.adjacency(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  if (kind == LaplacianKind::sym) {
    for (double& v : m.data()) v = -v;
    for (std::size_t i = 0; i < n; ++i) m(i, i) += 1.0;
  }
  return m;
}

std::size_t connected_components(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::size_t components = n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (adjacency(i, j) <= 0.0) continue;
      const std::size_t a = find(i);
      const std::size_t b = find(j);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
  }
  return components;
}

}  // namespace spa
