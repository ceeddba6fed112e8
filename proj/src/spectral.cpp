#include "spa/spectral.hpp"

#include <cmath>
#include <string>

#include "spa/error.hpp"

namespace spa {

namespace {

// Everything the backward pass needs from one graph's forward computation.
struct GraphTape {
  const Matrix* x = nullptr;
  Graph graph;
  MedianBandwidth median;  // only meaningful when the bandwidth was derived from x
  bool auto_bandwidth = false;
  Matrix sim;
  std::vector<double> inv_sqrt_deg;
  std::vector<bool> deg_floored;
  EigenDecomposition eig;
};

GraphTape record(const Matrix& x, const GsaConfig& cfg) {
  GraphTape tape;
  tape.x = &x;
  tape.auto_bandwidth = cfg.metric.kind == SimilarityKind::gaussian && !cfg.metric.bandwidth;
  SimilarityMetric metric = cfg.metric;
  if (tape.auto_bandwidth) {
    tape.median = median_bandwidth_detail(x, cfg.k);
    metric.bandwidth = tape.median.value;
  }
  tape.graph = build_knn_graph(x, cfg.k, metric);
  tape.sim = similarity_matrix(x, tape.graph.metric);

  const std::size_t n = tape.graph.n;
  tape.inv_sqrt_deg.resize(n);
  tape.deg_floored.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += tape.graph.adjacency(i, j);
    tape.deg_floored[i] = deg < kDegreeFloor;
    tape.inv_sqrt_deg[i] = 1.0 / std::sqrt(std::max(deg, kDegreeFloor));
  }
  tape.eig = sym_eig(laplacian_matrix(tape.graph, cfg.laplacian));
  return tape;
}

Matrix backward(const GraphTape& tape, std::span<const double> grad_eigenvalues,
                LaplacianKind kind) {
  const Graph& g = tape.graph;
  const std::size_t n = g.n;
  const Matrix& u = tape.eig.eigenvectors;
  const Matrix& a = g.adjacency;
  const auto& r = tape.inv_sqrt_deg;

  // Gradient with respect to the normalized adjacency N = D^{-1/2} A D^{-1/2}.
  Matrix grad_n(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += grad_eigenvalues[c] * u(i, c) * u(j, c);
      if (kind == LaplacianKind::sym) s = -s;
      grad_n(i, j) = s;
      grad_n(j, i) = s;
    }
  }

  std::vector<double> grad_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (tape.deg_floored[i]) continue;
    double grad_r = 0.0;
    for (std::size_t j = 0; j < n; ++j) grad_r += grad_n(i, j) * a(i, j) * r[j];
    grad_r *= 2.0;
    grad_deg[i] = grad_r * (-0.5 * r[i] * r[i] * r[i]);
  }

  // Per unordered pair: A_ij = A_ji = c_ij·S_ij with c_ij = (m_ij + m_ji)/2.
  Matrix coupling(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : g.neighbors[i]) {
      coupling(i, j) += 0.5;
      coupling(j, i) += 0.5;
    }
  }

  const Matrix& x = *tape.x;
  const std::size_t d = x.cols();
  Matrix grad_x(n, d);

  if (g.metric.kind == SimilarityKind::gaussian) {
    const double h = *g.metric.bandwidth;
    const Matrix dist = pairwise_sq_dists(x);
    Matrix grad_dist(n, n);  // upper triangle, per unordered pair
    double grad_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (coupling(i, j) == 0.0) continue;
        const double grad_aij = grad_n(i, j) * r[i] * r[j] + grad_deg[i];
        const double grad_aji = grad_n(j, i) * r[j] * r[i] + grad_deg[j];
        const double grad_s = (grad_aij + grad_aji) * coupling(i, j);
        const double s = tape.sim(i, j);
        grad_dist(i, j) += grad_s * (-s / (2.0 * h));
        grad_h += grad_s * s * dist(i, j) / (2.0 * h * h);
      }
    }
    if (tape.auto_bandwidth) {
      for (auto [i, j] : tape.median.pairs) {
        grad_dist(std::min(i, j), std::max(i, j)) += grad_h * tape.median.share;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double gd = grad_dist(i, j);
        if (gd == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = 2.0 * gd * (x(i, c) - x(j, c));
          grad_x(i, c) += diff;
          grad_x(j, c) -= diff;
        }
      }
    }
    return grad_x;
  }

  const Matrix unit = l2_normalize_rows(x);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coupling(i, j) == 0.0 || tape.sim(i, j) <= 0.0) continue;
      if (norms[i] == 0.0 || norms[j] == 0.0) continue;
      const double grad_aij = grad_n(i, j) * r[i] * r[j] + grad_deg[i];
      const double grad_aji = grad_n(j, i) * r[j] * r[i] + grad_deg[j];
      const double grad_s = (grad_aij + grad_aji) * coupling(i, j);
      const double cos = tape.sim(i, j);
      for (std::size_t c = 0; c < d; ++c) {
        grad_x(i, c) += grad_s * (unit(j, c) - cos * unit(i, c)) / norms[i];
        grad_x(j, c) += grad_s * (unit(i, c) - cos * unit(j, c)) / norms[j];
      }
    }
  }
  return grad_x;
}

}  // namespace

void GsaConfig::validate() const {
  if (!(p >= 1.0)) throw Error(ErrorKind::invalid_argument, "GSA norm order p must be >= 1");
  if (!(zero_eps > 0.0)) throw Error(ErrorKind::invalid_argument, "GSA zero_eps must be > 0");
  if (k < 1) throw Error(ErrorKind::invalid_argument, "GSA k must be >= 1");
}

LaplacianSpectrum spectrum(const Matrix& x, const GsaConfig& cfg) {
  cfg.validate();
  const Graph g = build_knn_graph(x, cfg.k, cfg.metric);
  EigenDecomposition eig = sym_eig(laplacian_matrix(g, cfg.laplacian));
  return {cfg.laplacian, std::move(eig.eigenvalues), std::move(eig.eigenvectors)};
}

double spectral_distance(std::span<const double> source, std::span<const double> target,
                         double p) {
  if (source.size() != target.size()) {
    throw Error(ErrorKind::dimension, "spectral distance needs equal vertex counts, got " +
                                          std::to_string(source.size()) + " and " +
                                          std::to_string(target.size()));
  }
  if (!(p >= 1.0)) throw Error(ErrorKind::invalid_argument, "spectral distance needs p >= 1");
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    sum += std::pow(std::abs(source[i] - target[i]), p);
  }
  return std::pow(sum, 1.0 / p);
}

GsaResult gsa_loss_and_grad(const Matrix& source, const Matrix& target, const GsaConfig& cfg) {
  cfg.validate();
  if (source.rows() != target.rows() || source.cols() != target.cols()) {
    throw Error(ErrorKind::dimension,
                "GSA batches must match in shape: " + std::to_string(source.rows()) + "x" +
                    std::to_string(source.cols()) + " vs " + std::to_string(target.rows()) + "x" +
                    std::to_string(target.cols()));
  }
  const GraphTape src = record(source, cfg);
  const GraphTape tgt = record(target, cfg);

  GsaResult out;
  out.loss = spectral_distance(src.eig.eigenvalues, tgt.eig.eigenvalues, cfg.p);
  out.grad_source = Matrix(source.rows(), source.cols());
  out.grad_target = Matrix(target.rows(), target.cols());
  if (out.loss < cfg.zero_eps) return out;

  const std::size_t n = source.rows();
  std::vector<double> grad_src(n);
  std::vector<double> grad_tgt(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = src.eig.eigenvalues[i] - tgt.eig.eigenvalues[i];
    double g = 0.0;
    if (delta != 0.0) {
      g = std::copysign(std::pow(std::abs(delta) / out.loss, cfg.p - 1.0), delta);
    }
    grad_src[i] = g;
    grad_tgt[i] = -g;
  }
  out.grad_source = backward(src, grad_src, cfg.laplacian);
  out.grad_target = backward(tgt, grad_tgt, cfg.laplacian);
  return out;
}

}  // namespace spa
