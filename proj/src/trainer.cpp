#include "spa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>

#include "spa/error.hpp"
#include "spa/nap.hpp"

namespace spa {

namespace {

// Epoch-wise shuffled batches; the incomplete tail of every epoch is dropped.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed)
      : order_(n), batch_(batch), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_ > order_.size()) reshuffle();
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

void check_finite(double v, const char* what, std::size_t iter) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::divergence,
                std::string("non-finite ") + what + " at iteration " + std::to_string(iter));
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorKind::config, why); };
  if (max_iters < 1) throw bad("max_iters must be >= 1");
  if (batch_size < 2) throw bad("batch_size must be >= 2");
  if (k < 1 || k >= batch_size) throw bad("k must satisfy 1 <= k < batch_size");
  if (!(lr0 > 0.0)) throw bad("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw bad("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw bad("weight_decay must be >= 0");
  if (!(bandwidth >= 0.0)) throw bad("bandwidth must be >= 0 (0 = median heuristic)");
  if (!(p >= 1.0)) throw bad("p must be >= 1");
  if (!(zero_eps > 0.0)) throw bad("zero_eps must be > 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw bad("beta must lie in [0, 1]");
  if (!(tau > 0.0)) throw bad("tau must be > 0");
  if (!(alpha_max >= 0.0)) throw bad("alpha_max must be >= 0");
  if (!(gsa_coef >= 0.0)) throw bad("gsa_coef must be >= 0");
  if (!(adv_coef >= 0.0)) throw bad("adv_coef must be >= 0");
  if (!(ssda_smoothing >= 0.0 && ssda_smoothing < 1.0)) throw bad("ssda_smoothing must lie in [0, 1)");
  if (eval_every < 1) throw bad("eval_every must be >= 1");
}

GsaConfig TrainConfig::gsa() const {
  GsaConfig g;
  g.k = k;
  g.metric = metric == SimilarityKind::cosine
                 ? SimilarityMetric::cosine()
                 : SimilarityMetric::gaussian(bandwidth > 0.0 ? std::optional(bandwidth) : std::nullopt);
  g.laplacian = laplacian;
  g.p = p;
  g.zero_eps = zero_eps;
  return g;
}

TrainResult train(const TrainConfig& cfg, const NetworkSpec& spec, const TrainInputs& inputs,
                  const MetricsSink& sink) {
  cfg.validate();
  const Dataset& source = inputs.source;
  const Dataset& target = inputs.target_train;
  if (source.size() == 0 || target.size() == 0) {
    throw Error(ErrorKind::config, "training needs nonempty source and target datasets");
  }
  if (source.size() < cfg.batch_size || target.size() < cfg.batch_size) {
    throw Error(ErrorKind::config, "batch_size " + std::to_string(cfg.batch_size) +
                                       " exceeds a dataset size (source " +
                                       std::to_string(source.size()) + ", target " +
                                       std::to_string(target.size()) + ")");
  }
  if (!source.fully_labeled()) throw Error(ErrorKind::config, "source dataset must be fully labeled");
  if (source.dim() != spec.input_dim() || target.dim() != spec.input_dim()) {
    throw Error(ErrorKind::dimension, "dataset width does not match the network input");
  }
  if (source.num_classes > spec.num_classes) {
    throw Error(ErrorKind::dimension, "dataset has more classes than the classifier");
  }

  std::unordered_set<std::size_t> ssda;
  if (inputs.ssda_labeled) {
    for (std::size_t i : *inputs.ssda_labeled) {
      if (i >= target.size() || target.labels[i] < 0) {
        throw Error(ErrorKind::config, "SSDA index " + std::to_string(i) + " is not a labeled target sample");
      }
      ssda.insert(i);
    }
  }

  TrainResult result;
  result.network = init_network(spec, derive_seed(cfg.seed, 0));
  Network& net = result.network;
  OptimizerState opt = OptimizerState::for_network(net, cfg.lr0, cfg.momentum, cfg.weight_decay);
  BatchSampler source_batches(source.size(), cfg.batch_size, derive_seed(cfg.seed, 1));
  BatchSampler target_batches(target.size(), cfg.batch_size, derive_seed(cfg.seed, 2));
  MemoryBank bank(target.size(), spec.num_classes, spec.bottleneck(), cfg.beta, cfg.tau);
  const GsaConfig gsa_cfg = cfg.gsa();
  const std::vector<std::size_t> source_labels = source.class_labels();

  result.log.reserve(cfg.max_iters);
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const double progress = static_cast<double>(iter) / static_cast<double>(cfg.max_iters);
    MetricsRecord rec;
    rec.iter = iter;
    rec.lr = lr_schedule(progress, cfg.lr0);
    rec.alpha = cfg.enable_nap ? alpha_schedule(iter, cfg.max_iters, cfg.alpha_max) : 0.0;
    rec.grl_lambda = cfg.enable_adv ? grl_lambda_schedule(progress) : 0.0;

    const std::vector<std::size_t> s_idx = source_batches.next();
    const std::vector<std::size_t> t_idx = target_batches.next();
    const Matrix xs = gather_rows(source.features, s_idx);
    const Matrix xt = gather_rows(target.features, t_idx);
    std::vector<std::size_t> ys(s_idx.size());
    for (std::size_t i = 0; i < s_idx.size(); ++i) ys[i] = source_labels[s_idx[i]];

    Matrix target_probs;
    Matrix target_feats;
    double ssda_loss = 0.0;

    const AuxiliaryTerms aux = [&](const ForwardResult& src, const ForwardResult& tgt,
                                   AuxiliaryGrads& grads) {
      target_probs = softmax_rows(tgt.logits);
      target_feats = tgt.features;

      if (cfg.enable_gsa) {
        if (src.features.rows() != tgt.features.rows()) {
          throw Error(ErrorKind::dimension, "GSA received unequal batch sizes");
        }
        const GsaResult gsa = gsa_loss_and_grad(src.features, tgt.features, gsa_cfg);
        rec.loss_gsa = cfg.gsa_coef * gsa.loss;
        for (std::size_t i = 0; i < gsa.grad_source.size(); ++i) {
          grads.grad_source_features.data()[i] += cfg.gsa_coef * gsa.grad_source.data()[i];
          grads.grad_target_features.data()[i] += cfg.gsa_coef * gsa.grad_target.data()[i];
        }
      }

      if (cfg.enable_nap && bank.fully_initialized() && rec.alpha > 0.0) {
        const PseudoLabelBatch pseudo = knn_vote(bank, tgt.features, t_idx, cfg.k);
        const LossGrad nap = nap_loss_and_grad(tgt.logits, pseudo, rec.alpha);
        rec.loss_nap = nap.loss;
        for (std::size_t i = 0; i < nap.grad.size(); ++i) {
          grads.grad_target_logits.data()[i] += nap.grad.data()[i];
        }
      }

      if (!ssda.empty()) {
        std::vector<std::size_t> rows;
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < t_idx.size(); ++i) {
          if (ssda.contains(t_idx[i])) {
            rows.push_back(i);
            labels.push_back(static_cast<std::size_t>(target.labels[t_idx[i]]));
          }
        }
        if (!rows.empty()) {
          const LossGrad ce = ce_loss_and_grad(gather_rows(tgt.logits, rows), labels, cfg.ssda_smoothing);
          ssda_loss = ce.loss;
          for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < ce.grad.cols(); ++c) {
              grads.grad_target_logits(rows[r], c) += ce.grad(r, c);
            }
          }
        }
      }
    };

    StepGradients step;
    try {
      step = cls_adv_loss_and_grad(net, xs, ys, xt, cfg.enable_adv, -cfg.adv_coef * rec.grl_lambda, aux);
    } catch (const Error& e) {
      // Inputs and config are validated up front; numeric failures here come from overflow.
      if (e.kind() != ErrorKind::invalid_argument && e.kind() != ErrorKind::symmetry &&
          e.kind() != ErrorKind::convergence) {
        throw;
      }
      throw Error(ErrorKind::divergence,
                  "numerical failure at iteration " + std::to_string(iter) + ": " + e.what());
    }
    rec.loss_cls = step.loss_cls + ssda_loss;
    rec.loss_adv = cfg.enable_adv ? cfg.adv_coef * step.loss_adv : 0.0;
    if (cfg.enable_adv && cfg.adv_coef != 1.0) {
      for (auto& layer : step.grads.discriminator.layers) {
        for (double& v : layer.weights.data()) v *= cfg.adv_coef;
        for (double& v : layer.bias) v *= cfg.adv_coef;
      }
    }
    check_finite(rec.loss_cls, "loss_cls", iter);
    check_finite(rec.loss_adv, "loss_adv", iter);
    check_finite(rec.loss_gsa, "loss_gsa", iter);
    check_finite(rec.loss_nap, "loss_nap", iter);

    sgd_step(net, step.grads, opt, rec.lr);
    for (auto t : parameter_tensors(std::as_const(net))) {
      for (double v : t) check_finite(v, "parameter", iter);
    }

    if (cfg.enable_nap) {
      for (std::size_t i = 0; i < t_idx.size(); ++i) {
        bank.update(t_idx[i], target_probs.row(i), target_feats.row(i));
      }
    }

    const bool last = iter + 1 == cfg.max_iters;
    if (inputs.eval_target && ((iter + 1) % cfg.eval_every == 0 || last)) {
      rec.target_accuracy = evaluate(net, *inputs.eval_target).accuracy;
    }
    if (sink) sink(rec);
    result.log.push_back(rec);
  }
  return result;
}

EvalResult evaluate_predictions(const Matrix& logits, std::span<const int> labels,
                                std::size_t num_classes) {
  if (labels.size() != logits.rows()) throw Error(ErrorKind::dimension, "label count mismatch");
  std::vector<std::size_t> hits(num_classes, 0);
  std::vector<std::size_t> totals(num_classes, 0);
  std::size_t correct = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] < 0) continue;
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= num_classes) throw Error(ErrorKind::index, "label out of class range");
    const auto row = logits.row(i);
    const auto pred = static_cast<std::size_t>(std::ranges::max_element(row) - row.begin());
    ++counted;
    ++totals[y];
    if (pred == y) {
      ++correct;
      ++hits[y];
    }
  }
  EvalResult out;
  out.accuracy = counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  out.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (totals[c]) out.per_class[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  }
  return out;
}

EvalResult evaluate(const Network& net, const Dataset& ds) {
  const ForwardResult f = forward(net, ds.features);
  return evaluate_predictions(f.logits, ds.labels, net.spec.num_classes);
}

Matrix extract_features(const Network& net, const Matrix& x) {
  return mlp_forward(net.feature, x).out;
}

double a_distance_from_error(double error) { return 2.0 * (1.0 - 2.0 * std::min(error, 0.5)); }

double a_distance(const Matrix& feats_s, const Matrix& feats_t, std::uint64_t seed) {
  if (feats_s.rows() == 0 || feats_t.rows() == 0) {
    throw Error(ErrorKind::invalid_argument, "A-distance needs nonempty feature sets");
  }
  if (feats_s.cols() != feats_t.cols()) {
    throw Error(ErrorKind::dimension, "A-distance feature widths differ");
  }
  const std::size_t d = feats_s.cols();
  std::mt19937_64 rng(seed);

  struct Sample {
    const double* x;
    double y;
  };
  std::vector<Sample> train_set;
  std::vector<Sample> test_set;
  auto halve = [&](const Matrix& f, double y) {
    std::vector<std::size_t> idx(f.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_train = std::max<std::size_t>(1, f.rows() / 2);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      (r < n_train ? train_set : test_set).push_back({f.row(idx[r]).data(), y});
    }
  };
  halve(feats_s, 1.0);
  halve(feats_t, 0.0);
  if (test_set.empty()) return a_distance_from_error(0.5);

  // Standardize with training statistics.
  std::vector<double> mean(d, 0.0);
  std::vector<double> scale(d, 0.0);
  for (const auto& s : train_set) {
    for (std::size_t c = 0; c < d; ++c) mean[c] += s.x[c];
  }
  for (double& m : mean) m /= static_cast<double>(train_set.size());
  for (const auto& s : train_set) {
    for (std::size_t c = 0; c < d; ++c) scale[c] += (s.x[c] - mean[c]) * (s.x[c] - mean[c]);
  }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(train_set.size()));
    v = v > 1e-12 ? 1.0 / v : 1.0;
  }

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  std::vector<double> z(d);
  auto standardize = [&](const double* x) {
    for (std::size_t c = 0; c < d; ++c) z[c] = (x[c] - mean[c]) * scale[c];
  };

  constexpr int kEpochs = 500;
  constexpr double kLr = 0.01;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < kEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const Sample& s = train_set[idx];
      standardize(s.x);
      double logit = b;
      for (std::size_t c = 0; c < d; ++c) logit += w[c] * z[c];
      const double prob = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                       : std::exp(logit) / (1.0 + std::exp(logit));
      const double g = prob - s.y;
      for (std::size_t c = 0; c < d; ++c) w[c] -= kLr * g * z[c];
      b -= kLr * g;
    }
  }

  std::size_t errors = 0;
  for (const auto& s : test_set) {
    standardize(s.x);
    double logit = b;
    for (std::size_t c = 0; c < d; ++c) logit += w[c] * z[c];
    const double pred = logit > 0.0 ? 1.0 : 0.0;
    if (pred != s.y) ++errors;
  }
  return a_distance_from_error(static_cast<double>(errors) / static_cast<double>(test_set.size()));
}

}  // namespace spa
