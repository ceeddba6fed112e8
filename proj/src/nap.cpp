#include "spa/nap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "spa/error.hpp"

namespace spa {

namespace {

void check_probability_vector(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::invalid_argument, "probability entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorKind::invalid_argument, "probability vector sums to " + std::to_string(sum));
  }
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

MemoryBank::MemoryBank(std::size_t num_samples, std::size_t num_classes, std::size_t feature_dim,
                       double beta, double tau)
    : probs_(num_samples, num_classes),
      feats_(num_samples, feature_dim),
      initialized_(num_samples, false),
      beta_(beta),
      tau_(tau) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "memory bank beta must lie in [0, 1]");
  }
  if (!(tau > 0.0)) throw Error(ErrorKind::invalid_argument, "invalid temperature: tau must be > 0");
  if (num_classes == 0 || feature_dim == 0) {
    throw Error(ErrorKind::invalid_argument, "memory bank needs classes and features");
  }
}

void MemoryBank::update(std::size_t index, std::span<const double> probs,
                        std::span<const double> feature) {
  if (index >= size()) {
    throw Error(ErrorKind::index, "memory bank index " + std::to_string(index) +
                                      " out of range (size " + std::to_string(size()) + ")");
  }
  if (probs.size() != num_classes() || feature.size() != feature_dim()) {
    throw Error(ErrorKind::dimension, "memory bank update has wrong vector lengths");
  }
  check_probability_vector(probs);
  const double fnorm = norm2(feature);
  if (!std::isfinite(fnorm) || fnorm == 0.0) {
    throw Error(ErrorKind::invalid_argument, "memory bank feature must be finite and nonzero");
  }

  const std::vector<double> sharp = sharpen(probs, tau_);
  auto prow = probs_.row(index);
  auto frow = feats_.row(index);

  if (!initialized_[index]) {
    std::ranges::copy(sharp, prow.begin());
    for (std::size_t c = 0; c < frow.size(); ++c) frow[c] = feature[c] / fnorm;
    initialized_[index] = true;
    ++initialized_count_;
    return;
  }

  double psum = 0.0;
  for (std::size_t c = 0; c < prow.size(); ++c) {
    prow[c] = beta_ * prow[c] + (1.0 - beta_) * sharp[c];
    psum += prow[c];
  }
  for (double& v : prow) v /= psum;

  for (std::size_t c = 0; c < frow.size(); ++c) {
    frow[c] = beta_ * frow[c] + (1.0 - beta_) * feature[c] / fnorm;
  }
  const double blended = norm2(frow);
  if (blended > 0.0) {
    for (double& v : frow) v /= blended;
  } else {
    // Exactly opposite directions cancelled; fall back to the new feature.
    for (std::size_t c = 0; c < frow.size(); ++c) frow[c] = feature[c] / fnorm;
  }
}

std::vector<double> sharpen(std::span<const double> probs, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::invalid_argument, "invalid temperature: tau must be > 0");
  std::vector<double> out(probs.size());
  if (tau == 1.0) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) sum += out[c] = std::max(probs[c], kSharpenFloor);
    for (double& v : out) v /= sum;
    return out;
  }
  // Work in log space so small temperatures do not underflow every entry.
  const double inv_tau = 1.0 / tau;
  double mx = -INFINITY;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    out[c] = inv_tau * std::log(std::max(probs[c], kSharpenFloor));
    mx = std::max(mx, out[c]);
  }
  double sum = 0.0;
  for (double& v : out) sum += v = std::exp(v - mx);
  for (double& v : out) v /= sum;
  return out;
}

PseudoLabelBatch knn_vote(const MemoryBank& bank, const Matrix& query_feats,
                          std::span<const std::size_t> query_indices, std::size_t k) {
  if (k < 1) throw Error(ErrorKind::invalid_argument, "knn_vote needs k >= 1");
  if (bank.initialized_count() < k + 1) {
    throw Error(ErrorKind::insufficient_memory,
                "knn_vote needs " + std::to_string(k + 1) + " initialized memory slots, have " +
                    std::to_string(bank.initialized_count()));
  }
  if (query_feats.rows() != query_indices.size() || query_feats.cols() != bank.feature_dim()) {
    throw Error(ErrorKind::dimension, "knn_vote query shape does not match the bank");
  }

  const Matrix queries = l2_normalize_rows(query_feats);
  const Matrix sims = matmul_a_bt(queries, bank.feats());
  const std::size_t num_classes = bank.num_classes();

  PseudoLabelBatch out;
  out.labels.resize(queries.rows());
  out.confidence.resize(queries.rows());
  out.votes = Matrix(queries.rows(), num_classes);

  std::vector<std::size_t> candidates;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    candidates.clear();
    for (std::size_t j = 0; j < bank.size(); ++j) {
      if (j != query_indices[q] && bank.initialized(j)) candidates.push_back(j);
    }
    const auto take = static_cast<std::ptrdiff_t>(std::min(k, candidates.size()));
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sims(q, a) != sims(q, b)) return sims(q, a) > sims(q, b);
                        return a < b;
                      });

    auto votes = out.votes.row(q);
    for (auto it = candidates.begin(); it != candidates.begin() + take; ++it) {
      const auto stored = bank.probs().row(*it);
      for (std::size_t c = 0; c < num_classes; ++c) votes[c] += stored[c];
    }
    const double total = std::accumulate(votes.begin(), votes.end(), 0.0);
    for (double& v : votes) v /= total;

    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    out.labels[q] = best;
    out.confidence[q] = votes[best];
  }
  return out;
}

LossGrad nap_loss_and_grad(const Matrix& logits, const PseudoLabelBatch& pseudo, double alpha) {
  if (pseudo.labels.size() != logits.rows() || pseudo.confidence.size() != logits.rows()) {
    throw Error(ErrorKind::dimension, "pseudo-label batch does not match logits");
  }
  const std::size_t batch = logits.rows();
  LossGrad out{0.0, Matrix(batch, logits.cols())};
  if (batch == 0 || alpha == 0.0) return out;

  const Matrix probs = softmax_rows(logits);
  const double scale = alpha / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t y = pseudo.labels[i];
    if (y >= logits.cols()) throw Error(ErrorKind::index, "pseudo-label out of class range");
    const auto row = logits.row(i);
    const double mx = *std::ranges::max_element(row);
    double lse = 0.0;
    for (double v : row) lse += std::exp(v - mx);
    const double log_p = row[y] - mx - std::log(lse);

    const double w = scale * pseudo.confidence[i];
    out.loss -= w * log_p;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      out.grad(i, c) = w * (probs(i, c) - (c == y ? 1.0 : 0.0));
    }
  }
  return out;
}

double alpha_schedule(std::size_t iter, std::size_t max_iter, double alpha_max) {
  if (max_iter < 1) throw Error(ErrorKind::invalid_argument, "alpha_schedule needs max_iter >= 1");
  if (iter > max_iter) throw Error(ErrorKind::invalid_argument, "alpha_schedule: iter > max_iter");
  return alpha_max * static_cast<double>(iter) / static_cast<double>(max_iter);
}

}  // namespace spa
