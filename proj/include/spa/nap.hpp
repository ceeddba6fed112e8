#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spa/numeric.hpp"

namespace spa {

/// Per-target-sample store of sharpened predictions and unit-norm features,
/// addressed by target sample index.
class MemoryBank {
 public:
  MemoryBank(std::size_t num_samples, std::size_t num_classes, std::size_t feature_dim,
             double beta, double tau);

  /// Sharpens p, normalizes f, and writes them into slot `index`: directly on
  /// first touch, by β-EMA (β weights the stored value) afterwards.
  void update(std::size_t index, std::span<const double> probs, std::span<const double> feature);

  std::size_t size() const noexcept { return initialized_.size(); }
  std::size_t num_classes() const noexcept { return probs_.cols(); }
  std::size_t feature_dim() const noexcept { return feats_.cols(); }
  double beta() const noexcept { return beta_; }
  double tau() const noexcept { return tau_; }

  bool initialized(std::size_t index) const { return initialized_.at(index); }
  std::size_t initialized_count() const noexcept { return initialized_count_; }
  bool fully_initialized() const noexcept { return initialized_count_ == size(); }

  const Matrix& probs() const noexcept { return probs_; }
  const Matrix& feats() const noexcept { return feats_; }

 private:
  Matrix probs_;
  Matrix feats_;
  std::vector<bool> initialized_;
  std::size_t initialized_count_ = 0;
  double beta_;
  double tau_;
};

struct PseudoLabelBatch {
  std::vector<std::size_t> labels;
  Matrix votes;  // rows are normalized vote vectors q̂
  std::vector<double> confidence;
};

inline constexpr double kSharpenFloor = 1e-12;

/// p^{1/τ} renormalized, on entries floored at kSharpenFloor.
std::vector<double> sharpen(std::span<const double> probs, double tau);

/// Weighted kNN vote over the initialized bank slots by inner product with
/// the unit-normalized query features. Each query's own slot is excluded.
PseudoLabelBatch knn_vote(const MemoryBank& bank, const Matrix& query_feats,
                          std::span<const std::size_t> query_indices, std::size_t k);

/// −(α/B)·Σᵢ confᵢ·log softmax(logitsᵢ)[ŷᵢ] and its gradient in the logits.
LossGrad nap_loss_and_grad(const Matrix& logits, const PseudoLabelBatch& pseudo, double alpha);

inline constexpr double kDefaultAlphaMax = 0.2;

/// Linear ramp alpha_max·iter/max_iter.
double alpha_schedule(std::size_t iter, std::size_t max_iter, double alpha_max = kDefaultAlphaMax);

}  // namespace spa
