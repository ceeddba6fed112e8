#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spa/numeric.hpp"

namespace spa {

enum class SimilarityKind { cosine, gaussian };

/// Edge-weight function for kNN graphs.
///
/// Gaussian weights are exp(−‖xᵢ−xⱼ‖² / (2·bandwidth)). An empty bandwidth
/// means "use median_bandwidth of the batch being graphed".
struct SimilarityMetric {
  SimilarityKind kind = SimilarityKind::gaussian;
  std::optional<double> bandwidth;

  static SimilarityMetric cosine() { return {SimilarityKind::cosine, std::nullopt}; }
  static SimilarityMetric gaussian(std::optional<double> bandwidth = std::nullopt);
};

enum class LaplacianKind { rwk, sym };

std::string_view to_string(SimilarityKind kind);
std::string_view to_string(LaplacianKind kind);
SimilarityKind parse_similarity_kind(std::string_view text);
LaplacianKind parse_laplacian_kind(std::string_view text);

struct Graph {
  std::size_t n = 0;
  std::size_t k = 0;
  Matrix adjacency;                              // symmetric, zero diagonal, entries in [0, 1]
  std::vector<std::vector<std::size_t>> neighbors;  // k selected per vertex, best first
  SimilarityMetric metric;                       // bandwidth resolved for gaussian graphs
};

inline constexpr double kBandwidthFloor = 1e-12;
inline constexpr double kDegreeFloor = 1e-12;

/// Directed kNN selection: for each vertex the k most similar others, ties to
/// the lower index. Gaussian graphs rank by squared distance, cosine graphs by
/// raw cosine similarity.
std::vector<std::vector<std::size_t>> select_neighbors(const Matrix& x, std::size_t k,
                                                       SimilarityKind kind);

/// Dense similarity δ(xᵢ, xⱼ) for all pairs (diagonal included, unused).
Matrix similarity_matrix(const Matrix& x, const SimilarityMetric& metric);

Graph build_knn_graph(const Matrix& x, std::size_t k, const SimilarityMetric& metric);

/// The directed (i, j) pairs whose squared distances determine the median
/// bandwidth, each with its share of the median (1 for odd counts, ½ each
/// for even counts). Empty when the floor applies.
struct MedianBandwidth {
  double value = kBandwidthFloor;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double share = 0.0;
};

MedianBandwidth median_bandwidth_detail(const Matrix& x, std::size_t k);

/// Median of all kNN squared distances, floored at kBandwidthFloor.
double median_bandwidth(const Matrix& x, std::size_t k);

/// kind = sym: I − D^{-1/2} A D^{-1/2}.
/// kind = rwk: D^{-1/2} A D^{-1/2}, the symmetric matrix similar to D⁻¹A.
/// Degrees are floored at kDegreeFloor.
Matrix laplacian_matrix(const Graph& g, LaplacianKind kind);

/// Number of connected components of the positive-weight edge set.
std::size_t connected_components(const Matrix& adjacency);

}  // namespace spa
