#include "spa/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "spa/error.hpp"

namespace spa {

namespace {

Mlp make_mlp(std::span<const std::size_t> widths) {
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back({Matrix(widths[i + 1], widths[i]), std::vector<double>(widths[i + 1], 0.0)});
  }
  return mlp;
}

void glorot_init(Mlp& mlp, std::mt19937_64& rng) {
  for (auto& layer : mlp.layers) {
    const double fan_in = static_cast<double>(layer.weights.cols());
    const double fan_out = static_cast<double>(layer.weights.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : layer.weights.data()) w = dist(rng);
    std::ranges::fill(layer.bias, 0.0);
  }
}

std::vector<std::size_t> widths_of(const Mlp& mlp) {
  std::vector<std::size_t> w{mlp.input_dim()};
  for (const auto& layer : mlp.layers) {
    if (layer.weights.cols() != w.back() || layer.bias.size() != layer.weights.rows()) {
      throw Error(ErrorKind::dimension, "inconsistent layer shapes");
    }
    w.push_back(layer.weights.rows());
  }
  return w;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

NetworkSpec NetworkSpec::synthetic(std::size_t input_dim, std::size_t num_classes) {
  return {{input_dim, 16, 16}, num_classes, {16}};
}

NetworkSpec NetworkSpec::feature_file(std::size_t input_dim, std::size_t num_classes) {
  return {{input_dim, 1024, 256}, num_classes, {1024}};
}

void NetworkSpec::validate() const {
  if (feature_widths.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "feature extractor needs at least one layer");
  }
  if (std::ranges::any_of(feature_widths, [](std::size_t w) { return w == 0; }) ||
      std::ranges::any_of(disc_hidden, [](std::size_t w) { return w == 0; })) {
    throw Error(ErrorKind::invalid_argument, "layer widths must be positive");
  }
  if (num_classes < 2) throw Error(ErrorKind::invalid_argument, "need at least 2 classes");
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net = zeros_like(Network{spec, {}, {}, {}});
  std::mt19937_64 rng(seed);
  glorot_init(net.feature, rng);
  glorot_init(net.classifier, rng);
  glorot_init(net.discriminator, rng);
  return net;
}

Network zeros_like(const Network& net) {
  const NetworkSpec& spec = net.spec;
  Network out;
  out.spec = spec;
  out.feature = make_mlp(spec.feature_widths);
  const std::vector<std::size_t> cls{spec.bottleneck(), spec.num_classes};
  out.classifier = make_mlp(cls);
  std::vector<std::size_t> disc{spec.bottleneck()};
  disc.insert(disc.end(), spec.disc_hidden.begin(), spec.disc_hidden.end());
  disc.push_back(1);
  out.discriminator = make_mlp(disc);
  return out;
}

NetworkSpec infer_spec(const Mlp& feature, const Mlp& classifier, const Mlp& discriminator) {
  if (feature.layers.empty() || classifier.layers.size() != 1 || discriminator.layers.empty()) {
    throw Error(ErrorKind::dimension, "network blocks have the wrong number of layers");
  }
  NetworkSpec spec;
  spec.feature_widths = widths_of(feature);
  const auto cls = widths_of(classifier);
  const auto disc = widths_of(discriminator);
  if (cls.front() != spec.bottleneck() || disc.front() != spec.bottleneck() || disc.back() != 1) {
    throw Error(ErrorKind::dimension, "classifier/discriminator shapes do not match the bottleneck");
  }
  spec.num_classes = cls.back();
  spec.disc_hidden.assign(disc.begin() + 1, disc.end() - 1);
  spec.validate();
  return spec;
}

std::vector<std::span<double>> parameter_tensors(Network& net) {
  std::vector<std::span<double>> out;
  for (Mlp* mlp : {&net.feature, &net.classifier, &net.discriminator}) {
    for (auto& layer : mlp->layers) {
      out.emplace_back(layer.weights.data());
      out.emplace_back(layer.bias);
    }
  }
  return out;
}

std::vector<std::span<const double>> parameter_tensors(const Network& net) {
  std::vector<std::span<const double>> out;
  for (const Mlp* mlp : {&net.feature, &net.classifier, &net.discriminator}) {
    for (const auto& layer : mlp->layers) {
      out.emplace_back(layer.weights.data());
      out.emplace_back(layer.bias);
    }
  }
  return out;
}

MlpOutput mlp_forward(const Mlp& mlp, const Matrix& x) {
  if (x.cols() != mlp.input_dim()) {
    throw Error(ErrorKind::dimension, "input width " + std::to_string(x.cols()) +
                                          " does not match network input " +
                                          std::to_string(mlp.input_dim()));
  }
  MlpOutput out;
  Matrix h = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    Matrix z = matmul_a_bt(h, layer.weights);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias[j];
    }
    out.cache.inputs.push_back(std::move(h));
    h = z;
    if (l + 1 < mlp.layers.size()) {
      for (double& v : h.data()) v = std::max(v, 0.0);
    }
    out.cache.pre.push_back(std::move(z));
  }
  out.out = std::move(h);
  return out;
}

Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& grad_out, Mlp& grads) {
  Matrix g = grad_out;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    if (l + 1 < mlp.layers.size()) {
      const Matrix& z = cache.pre[l];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (z.data()[i] <= 0.0) g.data()[i] = 0.0;
      }
    }
    auto& gl = grads.layers[l];
    const Matrix gw = matmul_at_b(g, cache.inputs[l]);
    for (std::size_t i = 0; i < gw.size(); ++i) gl.weights.data()[i] += gw.data()[i];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) gl.bias[j] += g(i, j);
    }
    g = matmul(g, mlp.layers[l].weights);
  }
  return g;
}

ForwardResult forward(const Network& net, const Matrix& x) {
  MlpOutput f = mlp_forward(net.feature, x);
  MlpOutput c = mlp_forward(net.classifier, f.out);
  return {std::move(f.out), std::move(c.out), std::move(f.cache), std::move(c.cache)};
}

MlpOutput discriminate(const Network& net, const Matrix& features) {
  return mlp_forward(net.discriminator, features);
}

LossGrad ce_loss_and_grad(const Matrix& logits, std::span<const std::size_t> labels,
                          double smoothing) {
  if (labels.size() != logits.rows()) {
    throw Error(ErrorKind::dimension, "label count does not match logits");
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "label smoothing must lie in [0, 1)");
  }
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  LossGrad out{0.0, Matrix(batch, classes)};
  if (batch == 0) return out;
  const double off = classes > 1 ? smoothing / static_cast<double>(classes - 1) : 0.0;
  const double on = 1.0 - smoothing;

  const Matrix probs = softmax_rows(logits);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) throw Error(ErrorKind::index, "label out of class range");
    const auto row = logits.row(i);
    const double mx = *std::ranges::max_element(row);
    double lse = 0.0;
    for (double v : row) lse += std::exp(v - mx);
    const double log_z = mx + std::log(lse);
    for (std::size_t c = 0; c < classes; ++c) {
      const double target = c == labels[i] ? on : off;
      if (target != 0.0) out.loss -= inv_b * target * (row[c] - log_z);
      out.grad(i, c) = inv_b * (probs(i, c) - target);
    }
  }
  return out;
}

Matrix GradientReversal::backward(const Matrix& grad) const {
  Matrix out = grad;
  for (double& v : out.data()) v *= -lambda;
  return out;
}

AdvLoss adv_loss_and_grad(std::span<const double> d_logit_s, std::span<const double> d_logit_t,
                          double grl_lambda) {
  if (!(grl_lambda >= 0.0)) throw Error(ErrorKind::invalid_argument, "grl_lambda must be >= 0");
  AdvLoss out;
  out.feature_scale = -grl_lambda;
  const std::size_t total = d_logit_s.size() + d_logit_t.size();
  if (total == 0) return out;
  const double inv = 1.0 / static_cast<double>(total);
  out.grad_logit_s.resize(d_logit_s.size());
  out.grad_logit_t.resize(d_logit_t.size());
  for (std::size_t i = 0; i < d_logit_s.size(); ++i) {
    out.loss += inv * softplus(-d_logit_s[i]);
    out.grad_logit_s[i] = inv * (sigmoid(d_logit_s[i]) - 1.0);
  }
  for (std::size_t i = 0; i < d_logit_t.size(); ++i) {
    out.loss += inv * softplus(d_logit_t[i]);
    out.grad_logit_t[i] = inv * sigmoid(d_logit_t[i]);
  }
  return out;
}

double grl_lambda_schedule(double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "progress must lie in [0, 1]");
  }
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

double lr_schedule(double progress, double lr0) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "progress must lie in [0, 1]");
  }
  return lr0 * std::pow(1.0 + 10.0 * progress, -0.75);
}

OptimizerState OptimizerState::for_network(const Network& net, double lr0, double momentum,
                                           double weight_decay) {
  OptimizerState state;
  state.lr0 = lr0;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  for (auto t : parameter_tensors(net)) state.buffers.emplace_back(t.size(), 0.0);
  return state;
}

void sgd_step(std::span<const std::span<double>> params,
              std::span<const std::span<const double>> grads, OptimizerState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.buffers.size()) {
    throw Error(ErrorKind::dimension, "sgd_step: tensor counts differ");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& buf = state.buffers[t];
    if (p.size() != g.size() || p.size() != buf.size()) {
      throw Error(ErrorKind::dimension, "sgd_step: tensor shapes differ");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      buf[i] = state.momentum * buf[i] + g[i] + state.weight_decay * p[i];
      p[i] -= lr * buf[i];
    }
  }
}

void sgd_step(Network& net, const Network& grads, OptimizerState& state, double lr) {
  const auto p = parameter_tensors(net);
  const auto g = parameter_tensors(grads);
  sgd_step(p, g, state, lr);
}

StepGradients cls_adv_loss_and_grad(const Network& net, const Matrix& xs,
                                    std::span<const std::size_t> ys, const Matrix& xt,
                                    bool enable_adv, double adv_feature_scale,
                                    const AuxiliaryTerms& aux) {
  StepGradients out;
  out.grads = zeros_like(net);

  const ForwardResult src = forward(net, xs);
  const ForwardResult tgt = forward(net, xt);

  LossGrad cls = ce_loss_and_grad(src.logits, ys);
  out.loss_cls = cls.loss;

  AuxiliaryGrads extra{Matrix(src.features.rows(), src.features.cols()),
                       Matrix(tgt.features.rows(), tgt.features.cols()),
                       Matrix(tgt.logits.rows(), tgt.logits.cols())};
  if (aux) aux(src, tgt, extra);

  Matrix grad_fs = mlp_backward(net.classifier, src.classifier_cache, cls.grad, out.grads.classifier);
  Matrix grad_ft = std::move(extra.grad_target_features);
  if (max_abs(extra.grad_target_logits) > 0.0) {
    const Matrix g = mlp_backward(net.classifier, tgt.classifier_cache, extra.grad_target_logits,
                                  out.grads.classifier);
    for (std::size_t i = 0; i < g.size(); ++i) grad_ft.data()[i] += g.data()[i];
  }
  for (std::size_t i = 0; i < grad_fs.size(); ++i) {
    grad_fs.data()[i] += extra.grad_source_features.data()[i];
  }

  if (enable_adv) {
    const MlpOutput ds = discriminate(net, src.features);
    const MlpOutput dt = discriminate(net, tgt.features);
    const AdvLoss adv = adv_loss_and_grad(ds.out.data(), dt.out.data(), 0.0);
    out.loss_adv = adv.loss;
    const Matrix gds(ds.out.rows(), 1, adv.grad_logit_s);
    const Matrix gdt(dt.out.rows(), 1, adv.grad_logit_t);
    const Matrix back_s = mlp_backward(net.discriminator, ds.cache, gds, out.grads.discriminator);
    const Matrix back_t = mlp_backward(net.discriminator, dt.cache, gdt, out.grads.discriminator);
    for (std::size_t i = 0; i < grad_fs.size(); ++i) {
      grad_fs.data()[i] += adv_feature_scale * back_s.data()[i];
    }
    for (std::size_t i = 0; i < grad_ft.size(); ++i) {
      grad_ft.data()[i] += adv_feature_scale * back_t.data()[i];
    }
  }

  mlp_backward(net.feature, src.feature_cache, grad_fs, out.grads.feature);
  mlp_backward(net.feature, tgt.feature_cache, grad_ft, out.grads.feature);
  return out;
}

}  // namespace spa
