#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "spa/data.hpp"
#include "spa/graph.hpp"
#include "spa/model.hpp"
#include "spa/spectral.hpp"

namespace spa {

struct TrainConfig {
  std::size_t max_iters = 2000;
  std::size_t batch_size = 32;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.005;
  std::size_t k = 5;
  SimilarityKind metric = SimilarityKind::gaussian;
  double bandwidth = 0.0;  // 0 selects the per-batch median heuristic
  LaplacianKind laplacian = LaplacianKind::rwk;
  double p = 2.0;
  double zero_eps = 1e-9;
  double beta = 0.5;
  double tau = 0.5;
  double alpha_max = 0.2;
  double gsa_coef = 1.0;
  double adv_coef = 1.0;
  double ssda_smoothing = 0.1;
  bool enable_adv = true;
  bool enable_gsa = true;
  bool enable_nap = true;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;

  void validate() const;
  GsaConfig gsa() const;
};

struct MetricsRecord {
  std::size_t iter = 0;
  double loss_cls = 0.0;
  double loss_adv = 0.0;
  double loss_gsa = 0.0;
  double loss_nap = 0.0;
  double lr = 0.0;
  double alpha = 0.0;
  double grl_lambda = 0.0;
  std::optional<double> target_accuracy;
};

struct TrainResult {
  Network network;
  std::vector<MetricsRecord> log;
};

struct TrainInputs {
  const Dataset& source;
  const Dataset& target_train;
  std::optional<std::vector<std::size_t>> ssda_labeled;  // indices into target_train
  const Dataset* eval_target = nullptr;                  // labeled; scored every eval_every
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Runs the full objective L_cls + L_adv + L_gsa + L_nap for cfg.max_iters
/// steps on equal-size source/target batches (incomplete batches dropped).
TrainResult train(const TrainConfig& cfg, const NetworkSpec& spec, const TrainInputs& inputs,
                  const MetricsSink& sink = {});

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class;  // empty optional: class absent
};

EvalResult evaluate_predictions(const Matrix& logits, std::span<const int> labels,
                                std::size_t num_classes);
EvalResult evaluate(const Network& net, const Dataset& ds);

/// Extracted bottleneck features for every row.
Matrix extract_features(const Network& net, const Matrix& x);

/// Proxy A-distance 2(1 − 2ε) of a logistic-regression domain probe.
double a_distance(const Matrix& feats_s, const Matrix& feats_t, std::uint64_t seed);

/// 2(1 − 2·min(ε, 0.5)).
double a_distance_from_error(double error);

}  // namespace spa
