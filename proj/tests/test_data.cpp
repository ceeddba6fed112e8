#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "spa/data.hpp"
#include "spa/error.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "spa_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

spa::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const spa::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return spa::ErrorKind::invalid_argument;
}

}  // namespace

TEST_CASE("noise-free moons lie on the canonical half-circles") {
  const auto ds = spa::gen_two_moons(200, 0.0, 0.0, 1);
  CHECK(ds.size() == 200);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.features(i, 0), y = ds.features(i, 1);
    if (ds.labels[i] == 0) {
      CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y >= -1e-12);
    } else {
      ++ones;
      CHECK((x - 1) * (x - 1) + (y - 0.5) * (y - 0.5) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y <= 0.5 + 1e-12);
    }
  }
  CHECK(ones == 100);
}

TEST_CASE("moons are deterministic and rotate about the origin") {
  const auto a = spa::gen_two_moons(100, 0.1, 0.0, 5);
  const auto b = spa::gen_two_moons(100, 0.1, 0.0, 5);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  const auto flat = spa::gen_two_moons(100, 0.0, 0.0, 5);
  const auto half_turn = spa::gen_two_moons(100, 0.0, 180.0, 5);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(std::abs(half_turn.features(i, 0) + flat.features(i, 0)) <= 1e-12);
    CHECK(std::abs(half_turn.features(i, 1) + flat.features(i, 1)) <= 1e-12);
  }
  CHECK_THROWS_AS(spa::gen_two_moons(101, 0.1, 0.0, 5), spa::Error);
  CHECK_THROWS_AS(spa::gen_two_moons(100, -0.1, 0.0, 5), spa::Error);
}

TEST_CASE("shifted blobs") {
  const std::size_t n = 300, dim = 4;
  const std::vector<double> shift{2.0, -1.0, 0.0, 0.5};
  const auto [s, t] = spa::gen_blobs_shift(n, 3, dim, shift, 1.0, 8);
  std::vector<std::size_t> counts(3, 0);
  for (int y : s.labels) ++counts[static_cast<std::size_t>(y)];
  CHECK(*std::ranges::max_element(counts) - *std::ranges::min_element(counts) <= 1);
  CHECK(t.labels == s.labels);
  for (std::size_t k = 0; k < dim; ++k) {
    double ms = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ms += s.features(i, k);
      mt += t.features(i, k);
    }
    CHECK(std::abs((mt - ms) / n - shift[k]) <= 3.0 / std::sqrt(static_cast<double>(n)));
  }
  const auto [s0, t0] = spa::gen_blobs_shift(n, 3, dim, std::vector<double>(dim, 0.0), 1.0, 8);
  CHECK(s0.features == t0.features);
  CHECK_THROWS_AS(spa::gen_blobs_shift(n, 1, dim, shift, 1.0, 8), spa::Error);
  CHECK_THROWS_AS(spa::gen_blobs_shift(n, 3, dim, {1.0}, 1.0, 8), spa::Error);
}

TEST_CASE("csv loading") {
  SUBCASE("two rows, one unlabeled") {
    const auto p = scratch("two.csv");
    write(p, "label,f0,f1\n0,1.0,2.0\n-1,3.0,4.0\n");
    const auto ds = spa::load_csv_features(p, spa::Domain::target);
    CHECK(ds.size() == 2);
    CHECK(ds.labels == std::vector<int>{0, spa::kUnlabeled});
    CHECK(ds.features(1, 1) == 4.0);
    CHECK(!ds.fully_labeled());
  }
  SUBCASE("empty data section") {
    const auto p = scratch("empty.csv");
    write(p, "label,f0\n");
    CHECK_THROWS_AS(spa::load_csv_features(p, spa::Domain::source), spa::Error);
  }
  SUBCASE("malformed rows name the line") {
    const auto p = scratch("bad.csv");
    write(p, "label,f0,f1\n0,1.0,2.0\n1,abc,2.0\n");
    try {
      spa::load_csv_features(p, spa::Domain::source);
      FAIL("expected an error");
    } catch (const spa::Error& e) {
      CHECK(e.kind() == spa::ErrorKind::parse);
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
    write(p, "label,f0,f1\n0,1.0\n");
    CHECK(kind_of([&] { spa::load_csv_features(p, spa::Domain::source); }) == spa::ErrorKind::parse);
    write(p, "label,f0\n5,1.0\n");
    CHECK(kind_of([&] { spa::load_csv_features(p, spa::Domain::source, 3); }) == spa::ErrorKind::parse);
    write(p, "lbl,f0\n0,1.0\n");
    CHECK(kind_of([&] { spa::load_csv_features(p, spa::Domain::source); }) == spa::ErrorKind::parse);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([] { spa::load_csv_features("/nonexistent/x.csv", spa::Domain::source); }) ==
          spa::ErrorKind::io);
  }
  SUBCASE("round trip") {
    const auto ds = spa::gen_two_moons(50, 0.1, 30.0, 2);
    const auto p = scratch("rt.csv");
    spa::save_csv_features(ds, p);
    const auto back = spa::load_csv_features(p, spa::Domain::source, 2);
    CHECK(back.labels == ds.labels);
    CHECK(back.features == ds.features);
  }
}

TEST_CASE("splits") {
  const auto ds = spa::gen_two_moons(10, 0.1, 0.0, 3);
  const auto [a, b] = spa::split(ds, {spa::SplitMode::transductive, 0.5, 0});
  CHECK(a.features == ds.features);
  CHECK(b.features == ds.features);

  const auto [train, test] = spa::split(ds, {spa::SplitMode::inductive, 0.5, 4});
  CHECK(train.size() == 5);
  CHECK(test.size() == 5);
  std::set<std::pair<double, double>> seen;
  for (const auto* part : {&train, &test}) {
    for (std::size_t i = 0; i < part->size(); ++i) seen.emplace(part->features(i, 0), part->features(i, 1));
  }
  CHECK(seen.size() == 10);
  const auto [train2, test2] = spa::split(ds, {spa::SplitMode::inductive, 0.5, 4});
  CHECK(train2.features == train.features);

  const auto big = spa::gen_two_moons(200, 0.1, 0.0, 3);
  const auto [tr, te] = spa::split(big, {spa::SplitMode::inductive, 0.3, 1});
  CHECK(te.size() == 60);
  CHECK(std::ranges::count(te.labels, 0) == 30);
}

TEST_CASE("few-shot sampling") {
  const auto ds = spa::gen_two_moons(20, 0.1, 0.0, 3);
  const auto one = spa::ssda_sample(ds, 1, 0);
  CHECK(one.size() == 2);
  CHECK(ds.labels[one[0]] != ds.labels[one[1]]);
  CHECK(spa::ssda_sample(ds, 1, 0) == one);

  spa::Dataset small = ds.subset({0, 1, 2, 10, 11, 12});
  const auto three = spa::ssda_sample(small, 3, 9);
  CHECK(three == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(kind_of([&] { spa::ssda_sample(small, 4, 9); }) == spa::ErrorKind::insufficient_class);
}

TEST_CASE("manifest round trip and validation") {
  spa::Manifest m;
  m.name = "demo";
  m.num_classes = 3;
  m.dim = 8;
  m.source = "s.csv";
  m.target = "t.csv";
  m.target_test = "tt.csv";
  const auto p = scratch("manifest.txt");
  m.save(p);
  const auto back = spa::Manifest::load(p);
  CHECK(back.name == "demo");
  CHECK(back.num_classes == 3);
  CHECK(back.source == p.parent_path() / "s.csv");
  CHECK(back.target_test.has_value());

  write(p, "name = x\nnum_classes = 2\ndim = 2\nsource = a\ntarget = b\ncolour = red\n");
  CHECK(kind_of([&] { spa::Manifest::load(p); }) == spa::ErrorKind::parse);
  write(p, "name = x\nnum_classes = 2\n");
  CHECK(kind_of([&] { spa::Manifest::load(p); }) == spa::ErrorKind::parse);
}
