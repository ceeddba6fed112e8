#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spa/error.hpp"
#include "spa/trainer.hpp"

using spa::Matrix;
using spa::TrainConfig;

namespace {

struct Moons {
  spa::Dataset source = spa::gen_two_moons(200, 0.1, 0.0, 0);
  spa::Dataset target = spa::gen_two_moons(200, 0.1, 30.0, 1, spa::Domain::target);
  spa::NetworkSpec spec = spa::NetworkSpec::synthetic(2, 2);
};

TrainConfig short_run(std::size_t iters) {
  TrainConfig cfg;
  cfg.max_iters = iters;
  cfg.eval_every = 25;
  return cfg;
}

bool same_parameters(const spa::Network& a, const spa::Network& b) {
  const auto pa = spa::parameter_tensors(a);
  const auto pb = spa::parameter_tensors(b);
  for (std::size_t t = 0; t < pa.size(); ++t) {
    if (!std::ranges::equal(pa[t], pb[t])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("one record per iteration with the expected invariants") {
  Moons m;
  const auto r = spa::train(short_run(60), m.spec, {m.source, m.target, std::nullopt, &m.target});
  REQUIRE(r.log.size() == 60);
  double prev_alpha = -1.0;
  bool nap_active = false;
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    const auto& rec = r.log[i];
    CHECK(rec.iter == i);
    CHECK(rec.loss_gsa >= 0.0);
    CHECK(rec.loss_nap >= 0.0);
    CHECK(rec.loss_cls >= 0.0);
    CHECK(rec.alpha >= prev_alpha);
    prev_alpha = rec.alpha;
    nap_active = nap_active || rec.loss_nap > 0.0;
    CHECK(rec.target_accuracy.has_value() == ((i + 1) % 25 == 0 || i + 1 == 60));
  }
  // 200 targets in batches of 32 fill the bank within the first epoch.
  CHECK(nap_active);
  CHECK(r.log.back().target_accuracy.value() >= 0.0);
}

TEST_CASE("identical config and seed give bitwise-identical parameters") {
  Moons m;
  const auto a = spa::train(short_run(40), m.spec, {m.source, m.target, {}});
  const auto b = spa::train(short_run(40), m.spec, {m.source, m.target, {}});
  CHECK(same_parameters(a.network, b.network));
  TrainConfig other = short_run(40);
  other.seed = 1;
  const auto c = spa::train(other, m.spec, {m.source, m.target, {}});
  CHECK(!same_parameters(a.network, c.network));
}

TEST_CASE("disabling every auxiliary loss reduces to source-only training") {
  Moons m;
  TrainConfig cfg = short_run(50);
  cfg.enable_adv = cfg.enable_gsa = cfg.enable_nap = false;
  const auto r = spa::train(cfg, m.spec, {m.source, m.target, {}});
  for (const auto& rec : r.log) {
    CHECK(rec.loss_adv == 0.0);
    CHECK(rec.loss_gsa == 0.0);
    CHECK(rec.loss_nap == 0.0);
    CHECK(rec.alpha == 0.0);
    CHECK(rec.grl_lambda == 0.0);
  }
}

TEST_CASE("gradients do not depend on the order of source samples in a batch") {
  std::mt19937_64 rng(3);
  const auto net = spa::init_network(spa::NetworkSpec::synthetic(2, 2), 5);
  const Matrix xs = oracle::random_matrix(12, 2, rng);
  const Matrix xt = oracle::random_matrix(12, 2, rng);
  std::vector<std::size_t> ys(12);
  for (std::size_t i = 0; i < 12; ++i) ys[i] = i % 2;
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> ys_perm(12);
  for (std::size_t i = 0; i < 12; ++i) ys_perm[i] = ys[perm[i]];

  spa::GsaConfig gsa;
  gsa.k = 3;
  const spa::AuxiliaryTerms aux = [&](const spa::ForwardResult& s, const spa::ForwardResult& t, spa::AuxiliaryGrads& g) {
    const auto r = spa::gsa_loss_and_grad(s.features, t.features, gsa);
    g.grad_source_features = r.grad_source;
    g.grad_target_features = r.grad_target;
  };
  const auto a = spa::cls_adv_loss_and_grad(net, xs, ys, xt, true, -0.5, aux);
  const auto b = spa::cls_adv_loss_and_grad(net, spa::gather_rows(xs, perm), ys_perm, xt, true, -0.5, aux);
  const auto ga = spa::parameter_tensors(std::as_const(a.grads));
  const auto gb = spa::parameter_tensors(std::as_const(b.grads));
  for (std::size_t t = 0; t < ga.size(); ++t) {
    for (std::size_t i = 0; i < ga[t].size(); ++i) CHECK(std::abs(ga[t][i] - gb[t][i]) <= 1e-12);
  }
}

TEST_CASE("semi-supervised targets add to the classification loss") {
  Moons m;
  const auto shots = spa::ssda_sample(m.target, 3, 0);
  TrainConfig cfg = short_run(30);
  cfg.enable_gsa = cfg.enable_nap = cfg.enable_adv = false;
  const auto plain = spa::train(cfg, m.spec, {m.source, m.target, {}});
  const auto semi = spa::train(cfg, m.spec, {m.source, m.target, shots});
  double extra = 0.0;
  for (std::size_t i = 0; i < 30; ++i) extra += semi.log[i].loss_cls - plain.log[i].loss_cls;
  CHECK(extra != 0.0);
  spa::Dataset unlabeled = m.target;
  unlabeled.labels.assign(unlabeled.size(), spa::kUnlabeled);
  CHECK_THROWS_AS(spa::train(cfg, m.spec, {m.source, unlabeled, shots}), spa::Error);
}

TEST_CASE("training on the shifted source equals training on the blob target") {
  const std::vector<double> shift{1.5, -0.5, 0.0};
  const auto [s, t] = spa::gen_blobs_shift(120, 3, 3, shift, 1.0, 2);
  spa::Dataset shifted = s;
  for (std::size_t i = 0; i < shifted.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) shifted.features(i, k) += shift[k];
  }
  spa::Dataset target_as_source = t;
  target_as_source.domain = spa::Domain::source;
  TrainConfig cfg = short_run(30);
  cfg.enable_adv = cfg.enable_gsa = cfg.enable_nap = false;
  const auto spec = spa::NetworkSpec::synthetic(3, 3);
  const auto a = spa::train(cfg, spec, {shifted, t, {}});
  const auto b = spa::train(cfg, spec, {target_as_source, t, {}});
  CHECK(same_parameters(a.network, b.network));
}

TEST_CASE("configuration and divergence errors") {
  Moons m;
  auto kind_of = [&](const TrainConfig& cfg, const spa::Dataset& src) {
    try {
      spa::train(cfg, m.spec, {src, m.target, {}});
    } catch (const spa::Error& e) {
      return std::pair{e.kind(), std::string(e.what())};
    }
    return std::pair{spa::ErrorKind::invalid_argument, std::string("no error")};
  };
  spa::Dataset empty = m.source.subset({});
  CHECK(kind_of(short_run(5), empty).first == spa::ErrorKind::config);
  TrainConfig bad = short_run(5);
  bad.batch_size = 1;
  CHECK(kind_of(bad, m.source).first == spa::ErrorKind::config);
  bad = short_run(5);
  bad.k = 40;
  CHECK(kind_of(bad, m.source).first == spa::ErrorKind::config);

  TrainConfig wild = short_run(50);
  wild.lr0 = 1e8;
  const auto [kind, what] = kind_of(wild, m.source);
  CHECK(kind == spa::ErrorKind::divergence);
  CHECK(what.find("iteration") != std::string::npos);
}

TEST_CASE("evaluation") {
  const std::vector<int> labels{0, 1, 1, 0};
  CHECK(spa::evaluate_predictions(Matrix{{1, 0}, {0, 1}, {0, 1}, {1, 0}}, labels, 2).accuracy == 1.0);
  CHECK(spa::evaluate_predictions(Matrix(4, 2, 0.0), labels, 2).accuracy == 0.5);
  const auto r = spa::evaluate_predictions(Matrix{{1, 0}, {0, 1}, {1, 0}, {1, 0}}, labels, 3);
  CHECK(r.accuracy == 0.75);
  REQUIRE(r.per_class.size() == 3);
  CHECK(r.per_class[0].value() == 1.0);
  CHECK(r.per_class[1].value() == 0.5);
  CHECK(!r.per_class[2].has_value());
}

TEST_CASE("proxy A-distance") {
  CHECK(spa::a_distance_from_error(0.25) == doctest::Approx(1.0));
  CHECK(spa::a_distance_from_error(0.7) == 0.0);
  CHECK(spa::a_distance_from_error(0.0) == 2.0);

  std::mt19937_64 rng(12);
  const Matrix x = oracle::random_matrix(200, 4, rng);
  const double same = spa::a_distance(x, x, 0);
  CHECK(same >= 0.0);
  CHECK(same <= 0.2);

  Matrix far = oracle::random_matrix(200, 4, rng);
  for (std::size_t i = 0; i < far.rows(); ++i) far(i, 0) += 50.0;
  CHECK(spa::a_distance(x, far, 0) >= 1.8);
}
