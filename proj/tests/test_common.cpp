#include <doctest.h>

#include <set>

#include "labelmia/common.hpp"

using namespace lmia;

TEST_CASE("derive_seed gives distinct streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 10; ++base)
    for (std::uint64_t s = 0; s < 50; ++s) seen.insert(derive_seed(base, s));
  CHECK(seen.size() == 500);
  CHECK(derive_seed(1, 2, 3) == derive_seed(derive_seed(1, 2), 3));
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    auto v = c.uniform_index(13);
    CHECK(v < 13);
  }
  CHECK_THROWS_AS(c.uniform_index(0), ArgumentError);
}

TEST_CASE("rng uniform_index is roughly uniform") {
  Rng r(3);
  std::vector<int> hist(8, 0);
  const int draws = 80000;
  for (int i = 0; i < draws; ++i) hist[r.uniform_index(8)]++;
  for (int c : hist) {
    CHECK(c > draws / 8 - 600);
    CHECK(c < draws / 8 + 600);
  }
}

TEST_CASE("rng normal moments") {
  Rng r(11);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("sample_indices draws distinct values") {
  Rng r(5);
  auto idx = r.sample_indices(20, 12);
  CHECK(idx.size() == 12);
  std::set<std::size_t> s(idx.begin(), idx.end());
  CHECK(s.size() == 12);
  for (auto v : s) CHECK(v < 20);
  CHECK_THROWS_AS(r.sample_indices(3, 4), ArgumentError);
}

TEST_CASE("shuffle permutes") {
  Rng r(9);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto orig = v;
  r.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);
}

TEST_CASE("fmt_real round-trips") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 3.14159265358979, 1e-300, 1.0 / 3.0}) {
    std::string s = fmt_real(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("fingerprint is stable") {
  CHECK(fingerprint_hex("abc") == fingerprint_hex("abc"));
  CHECK(fingerprint_hex("abc") != fingerprint_hex("abd"));
  CHECK(fingerprint_hex("x").size() == 16);
}
