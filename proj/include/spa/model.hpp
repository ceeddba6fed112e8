#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spa/numeric.hpp"

namespace spa {

struct LayerParams {
  Matrix weights;  // out x in
  std::vector<double> bias;
};

/// Fully connected stack with a rectifier between layers and none on the output.
struct Mlp {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.front().weights.cols(); }
  std::size_t output_dim() const { return layers.back().weights.rows(); }
};

struct NetworkSpec {
  std::vector<std::size_t> feature_widths;  // d_in, hidden..., bottleneck
  std::size_t num_classes = 2;
  std::vector<std::size_t> disc_hidden;  // bottleneck -> disc_hidden... -> 1

  std::size_t input_dim() const { return feature_widths.front(); }
  std::size_t bottleneck() const { return feature_widths.back(); }

  /// d_in→16→16, classifier 16→C, discriminator 16→16→1.
  static NetworkSpec synthetic(std::size_t input_dim, std::size_t num_classes);
  /// d_in→1024→256, classifier 256→C, discriminator 256→1024→1.
  static NetworkSpec feature_file(std::size_t input_dim, std::size_t num_classes);

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct Network {
  NetworkSpec spec;
  Mlp feature;
  Mlp classifier;
  Mlp discriminator;
};

/// Glorot-uniform weights, zero biases.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);
/// Same shapes as `net`, every parameter zero.
Network zeros_like(const Network& net);
/// Rebuilds the spec implied by the parameter shapes; throws on inconsistency.
NetworkSpec infer_spec(const Mlp& feature, const Mlp& classifier, const Mlp& discriminator);

std::vector<std::span<double>> parameter_tensors(Network& net);
std::vector<std::span<const double>> parameter_tensors(const Network& net);

struct MlpCache {
  std::vector<Matrix> inputs;  // input of every layer (post-activation of the previous one)
  std::vector<Matrix> pre;     // pre-activation of every layer
};

struct MlpOutput {
  Matrix out;
  MlpCache cache;
};

MlpOutput mlp_forward(const Mlp& mlp, const Matrix& x);
/// Accumulates parameter gradients into `grads` and returns the input gradient.
Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp& grads);

struct ForwardResult {
  Matrix features;
  Matrix logits;
  MlpCache feature_cache;
  MlpCache classifier_cache;
};

ForwardResult forward(const Network& net, const Matrix& x);
/// Discriminator logits, one per row of `features`.
MlpOutput discriminate(const Network& net, const Matrix& features);

/// Mean cross-entropy against targets smoothed to (1−ε) on the label and
/// ε/(C−1) elsewhere.
LossGrad ce_loss_and_grad(const Matrix& logits, std::span<const std::size_t> labels,
                          double smoothing = 0.0);

/// Identity forward; backward negates and scales by lambda.
struct GradientReversal {
  double lambda = 1.0;

  Matrix forward(const Matrix& x) const { return x; }
  Matrix backward(const Matrix& grad) const;
};

struct AdvLoss {
  double loss = 0.0;
  std::vector<double> grad_logit_s;  // minimizing gradient for the discriminator
  std::vector<double> grad_logit_t;
  double feature_scale = 0.0;        // multiplier for gradients crossing into F (−λ)
};

/// Sigmoid binary cross-entropy averaged over both batches, source labelled 1
/// and target 0.
AdvLoss adv_loss_and_grad(std::span<const double> d_logit_s, std::span<const double> d_logit_t,
                          double grl_lambda);

/// 2/(1+exp(−10·progress)) − 1.
double grl_lambda_schedule(double progress);
/// lr0·(1 + 10·progress)^(−0.75).
double lr_schedule(double progress, double lr0);

struct OptimizerState {
  std::vector<std::vector<double>> buffers;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.005;

  static OptimizerState for_network(const Network& net, double lr0 = 0.01, double momentum = 0.9,
                                    double weight_decay = 0.005);
};

/// buffer ← momentum·buffer + grad + weight_decay·param; param ← param − lr·buffer.
void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, OptimizerState& state, double lr);
void sgd_step(Network& net, const Network& grads, OptimizerState& state, double lr);

/// Extra gradients injected at the features and target logits by losses that
/// live outside this module (graph alignment, pseudo-labels, SSDA targets).
struct AuxiliaryGrads {
  Matrix grad_source_features;
  Matrix grad_target_features;
  Matrix grad_target_logits;
};

using AuxiliaryTerms =
    std::function<void(const ForwardResult& source, const ForwardResult& target, AuxiliaryGrads&)>;

struct StepGradients {
  double loss_cls = 0.0;
  double loss_adv = 0.0;
  Network grads;
};

/// Supervised loss on the source batch plus the adversarial loss, backpropagated
/// through every network. The adversarial gradient enters F multiplied by
/// `adv_feature_scale` (−λ for gradient reversal, +1 for the plain gradient).
/// With `enable_adv` false the discriminator is not evaluated.
StepGradients cls_adv_loss_and_grad(const Network& net, const Matrix& xs,
                                    std::span<const std::size_t> ys, const Matrix& xt,
                                    bool enable_adv, double adv_feature_scale,
                                    const AuxiliaryTerms& aux = {});

}  // namespace spa
