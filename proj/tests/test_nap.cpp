#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spa/error.hpp"
#include "spa/nap.hpp"

using spa::Matrix;
using spa::MemoryBank;

namespace {

std::vector<double> random_probs(std::size_t c, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> p(c);
  double s = 0.0;
  for (double& v : p) s += (v = g(rng) + 1e-6);
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> random_vec(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("sharpen") {
  const std::vector<double> p{0.8, 0.2};
  const auto s = spa::sharpen(p, 0.5);
  CHECK(s[0] == doctest::Approx(0.64 / 0.68).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.04 / 0.68).epsilon(1e-12));
  CHECK(s[0] == doctest::Approx(0.94118).epsilon(1e-5));

  const auto same = spa::sharpen(p, 1.0);
  CHECK(same[0] == doctest::Approx(0.8).epsilon(1e-14));
  const auto uniform = spa::sharpen(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 0.1);
  for (double v : uniform) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(spa::sharpen(p, 0.0), spa::Error);
  CHECK_THROWS_AS(spa::sharpen(p, -1.0), spa::Error);
}

TEST_CASE("sharpen preserves the argmax and raises the max for tau < 1") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto p = random_probs(5, rng);
    const auto s = spa::sharpen(p, 0.3);
    const auto pa = std::ranges::max_element(p) - p.begin();
    const auto sa = std::ranges::max_element(s) - s.begin();
    CHECK(pa == sa);
    CHECK(s[static_cast<std::size_t>(sa)] >= p[static_cast<std::size_t>(pa)] - 1e-15);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("memory update") {
  SUBCASE("first touch writes through") {
    MemoryBank bank(2, 2, 2, 0.5, 1.0);
    CHECK(!bank.initialized(0));
    bank.update(0, std::vector<double>{1.0, 0.0}, std::vector<double>{3.0, 4.0});
    CHECK(bank.initialized(0));
    CHECK(bank.feats()(0, 0) == doctest::Approx(0.6));
    CHECK(bank.probs()(0, 0) == doctest::Approx(1.0));
    CHECK(bank.initialized_count() == 1);
  }
  SUBCASE("beta 0.5 averages (1,0) and (0,1)") {
    MemoryBank bank(1, 2, 2, 0.5, 1.0);
    bank.update(0, std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0});
    bank.update(0, std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 0.0});
    CHECK(bank.probs()(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(bank.probs()(0, 1) == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("beta 0 replaces, beta 1 keeps") {
    MemoryBank replace(1, 2, 2, 0.0, 0.5);
    MemoryBank keep(1, 2, 2, 1.0, 0.5);
    for (MemoryBank* b : {&replace, &keep}) {
      b->update(0, std::vector<double>{0.9, 0.1}, std::vector<double>{1.0, 0.0});
      b->update(0, std::vector<double>{0.2, 0.8}, std::vector<double>{0.0, 2.0});
    }
    const auto sharpened = spa::sharpen(std::vector<double>{0.2, 0.8}, 0.5);
    CHECK(replace.probs()(0, 1) == doctest::Approx(sharpened[1]).epsilon(1e-12));
    CHECK(replace.feats()(0, 1) == doctest::Approx(1.0));
    const auto first = spa::sharpen(std::vector<double>{0.9, 0.1}, 0.5);
    CHECK(keep.probs()(0, 0) == doctest::Approx(first[0]).epsilon(1e-12));
    CHECK(keep.feats()(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("errors") {
    MemoryBank bank(2, 2, 2, 0.5, 0.5);
    try {
      bank.update(2, std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
      FAIL("expected an error");
    } catch (const spa::Error& e) {
      CHECK(e.kind() == spa::ErrorKind::index);
    }
    CHECK_THROWS_AS(bank.update(0, std::vector<double>{0.5, 0.5}, std::vector<double>{0.0, 0.0}), spa::Error);
  }
}

TEST_CASE("EMA stays between old and new values before renormalization") {
  std::mt19937_64 rng(12);
  for (double beta : {0.2, 0.5, 0.8}) {
    MemoryBank bank(1, 3, 4, beta, 0.5);
    bank.update(0, random_probs(3, rng), random_vec(4, rng));
    for (int t = 0; t < 20; ++t) {
      const std::vector<double> old(bank.probs().row(0).begin(), bank.probs().row(0).end());
      const auto p = random_probs(3, rng);
      const auto s = spa::sharpen(p, 0.5);
      bank.update(0, p, random_vec(4, rng));
      // Blend of two probability vectors already sums to 1, so the stored row is the blend itself.
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(bank.probs()(0, c) >= std::min(old[c], s[c]) - 1e-12);
        CHECK(bank.probs()(0, c) <= std::max(old[c], s[c]) + 1e-12);
      }
    }
  }
}

TEST_CASE("vote with two neighbors") {
  MemoryBank bank(3, 2, 2, 0.5, 1.0);
  bank.update(0, std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  bank.update(1, std::vector<double>{0.8, 0.2}, std::vector<double>{1.0, 0.1});
  bank.update(2, std::vector<double>{0.6, 0.4}, std::vector<double>{1.0, -0.1});
  const std::vector<std::size_t> idx{0};
  const auto pl = spa::knn_vote(bank, Matrix{{2.0, 0.0}}, idx, 2);
  CHECK(pl.votes(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(pl.votes(0, 1) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pl.labels[0] == 0);
  CHECK(pl.confidence[0] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("unanimous one-hot neighbors") {
  MemoryBank bank(4, 3, 2, 0.5, 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    bank.update(i, std::vector<double>{0.0, 0.0, 1.0}, std::vector<double>{1.0, static_cast<double>(i)});
  }
  const std::vector<std::size_t> idx{0};
  const auto pl = spa::knn_vote(bank, Matrix{{1.0, 0.0}}, idx, 3);
  CHECK(pl.labels[0] == 2);
  CHECK(pl.confidence[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("vote needs k + 1 initialized slots") {
  MemoryBank bank(4, 2, 2, 0.5, 0.5);
  bank.update(0, std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  bank.update(1, std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  const std::vector<std::size_t> idx{0};
  try {
    spa::knn_vote(bank, Matrix{{1.0, 0.0}}, idx, 2);
    FAIL("expected an error");
  } catch (const spa::Error& e) {
    CHECK(e.kind() == spa::ErrorKind::insufficient_memory);
  }
}

TEST_CASE("vote agrees with the exhaustive scan on random banks") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 8 + static_cast<std::size_t>(trial) % 57;
    const std::size_t c = 2 + static_cast<std::size_t>(trial) % 4;
    const std::size_t k = 1 + static_cast<std::size_t>(trial) % 5;
    MemoryBank bank(n, c, 4, 0.5, 0.5);
    for (std::size_t i = 0; i < n; ++i) bank.update(i, random_probs(c, rng), random_vec(4, rng));
    std::vector<std::size_t> idx(16);
    for (auto& i : idx) i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const Matrix q = oracle::random_matrix(16, 4, rng);
    const auto pl = spa::knn_vote(bank, q, idx, k);
    const std::vector<bool> init(n, true);
    for (std::size_t b = 0; b < 16; ++b) {
      const auto want = oracle::vote(bank.probs(), bank.feats(), init,
                                     std::vector<double>(q.row(b).begin(), q.row(b).end()), idx[b], k);
      CHECK(pl.labels[b] == want.label);
      CHECK(pl.confidence[b] == doctest::Approx(want.confidence).epsilon(1e-12));
      CHECK(pl.confidence[b] >= 1.0 / static_cast<double>(c) - 1e-12);
      for (std::size_t j = 0; j < c; ++j) CHECK(pl.votes(b, j) == doctest::Approx(want.q_hat[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("nap loss") {
  spa::PseudoLabelBatch pl{{1}, Matrix{{0.2, 0.8}}, {0.8}};
  SUBCASE("alpha 0") {
    const auto r = spa::nap_loss_and_grad(Matrix{{0.3, -0.2}}, pl, 0.0);
    CHECK(r.loss == 0.0);
    CHECK(spa::max_abs(r.grad) == 0.0);
  }
  SUBCASE("peaked logits") {
    const auto r = spa::nap_loss_and_grad(Matrix{{0.0, 20.0}}, pl, 0.2);
    CHECK(r.loss <= 0.2 * 0.8 * 2.1e-9);
  }
  SUBCASE("gradient") {
    std::mt19937_64 rng(4);
    const Matrix logits = oracle::random_matrix(5, 3, rng);
    spa::PseudoLabelBatch batch{{0, 2, 1, 1, 0}, Matrix(5, 3, 1.0 / 3), {0.9, 0.5, 0.4, 0.7, 1.0}};
    const auto r = spa::nap_loss_and_grad(logits, batch, 0.3);
    const Matrix fd = spa::finite_diff_grad(
        [&](const Matrix& m) { return spa::nap_loss_and_grad(m, batch, 0.3).loss; }, logits, 1e-5);
    CHECK(oracle::rel_error(r.grad, fd) <= 1e-6);
  }
  SUBCASE("non-negative and non-increasing in the pseudo-class logit") {
    double prev = INFINITY;
    for (double z = -5.0; z <= 5.0; z += 0.5) {
      const double l = spa::nap_loss_and_grad(Matrix{{0.1, z}}, pl, 0.2).loss;
      CHECK(l >= 0.0);
      CHECK(l <= prev);
      prev = l;
    }
  }
}

TEST_CASE("alpha ramp") {
  CHECK(spa::alpha_schedule(0, 100) == 0.0);
  CHECK(spa::alpha_schedule(100, 100) == doctest::Approx(0.2));
  CHECK(spa::alpha_schedule(50, 100, 0.4) == doctest::Approx(0.2));
}
