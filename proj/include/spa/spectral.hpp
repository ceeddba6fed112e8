#pragma once

#include <span>
#include <vector>

#include "spa/graph.hpp"
#include "spa/numeric.hpp"

namespace spa {

struct LaplacianSpectrum {
  LaplacianKind kind = LaplacianKind::rwk;
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;
};

struct GsaConfig {
  std::size_t k = 5;
  SimilarityMetric metric = SimilarityMetric::gaussian();
  LaplacianKind laplacian = LaplacianKind::rwk;
  double p = 2.0;
  double zero_eps = 1e-9;  // below this distance both gradients are zero

  void validate() const;
};

LaplacianSpectrum spectrum(const Matrix& x, const GsaConfig& cfg);

/// ‖Λs − Λt‖_p over spectra sorted descending.
double spectral_distance(std::span<const double> source, std::span<const double> target, double p);

struct GsaResult {
  double loss = 0.0;
  Matrix grad_source;
  Matrix grad_target;
};

/// Spectral distance between the kNN graphs of two equal-size batches, with
/// its gradient with respect to both batches.
///
/// The backward pass differentiates eigenvalues (∂λ/∂M = u uᵀ), the degree
/// normalization and the edge weights, including the median bandwidth when
/// it is data-derived. The neighbor selection itself is held fixed.
GsaResult gsa_loss_and_grad(const Matrix& source, const Matrix& target, const GsaConfig& cfg);

}  // namespace spa
