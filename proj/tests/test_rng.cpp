#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "coopsim/rng.hpp"

using namespace coopsim;

TEST_CASE("mix64 matches the reference finalizer") {
  CHECK(mix64(0) == 0xE220A8397B1DCDAFull);
  CHECK(mix64(1) == 0x910A2DEC89025CC1ull);
  CHECK(mix64(42) == 0xBDD732262FEB6E95ull);
}

TEST_CASE("derive_seed separates streams and indices") {
  const std::uint64_t base = 1234;
  CHECK(derive_seed(base, kStreamLayout) != derive_seed(base, kStreamPlacement));
  CHECK(derive_seed(base, kStreamLayout, 0) != derive_seed(base, kStreamLayout, 1));
  CHECK(derive_seed(base, kStreamLayout, 1, 0) !=
        derive_seed(base, kStreamLayout, 0, 1));
  CHECK(derive_seed(base, kStreamLayout, 2, 3) ==
        derive_seed(base, kStreamLayout, 2, 3));
  CHECK(derive_seed(base + 1, kStreamLayout) != derive_seed(base, kStreamLayout));
}

TEST_CASE("sequences are reproducible") {
  SplitRng a(901), b(901), c(902);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform stays in range with the right mean") {
  SplitRng rng(77);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == Catch::Approx(0.5).margin(0.01));

  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-3.0, 7.0);
    REQUIRE(v >= -3.0);
    REQUIRE(v < 7.0);
  }
}

TEST_CASE("uniform_int covers both endpoints") {
  SplitRng rng(78);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const long long v = rng.uniform_int(10, 14);
    REQUIRE(v >= 10);
    REQUIRE(v <= 14);
    seen[static_cast<std::size_t>(v - 10)]++;
  }
  for (int count : seen) CHECK(count > 0);
}

TEST_CASE("gaussian moments") {
  SplitRng rng(79);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == Catch::Approx(0.0).margin(0.02));
  CHECK(std::sqrt(var) == Catch::Approx(1.0).margin(0.02));

  SplitRng rng2(79);
  double shifted = 0.0;
  for (int i = 0; i < 10000; ++i) shifted += rng2.gaussian(5.0, 2.0);
  CHECK(shifted / 10000 == Catch::Approx(5.0).margin(0.1));
}

TEST_CASE("truncated gaussian respects its bound") {
  SplitRng rng(80);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.truncated_gaussian(4.5, 0.27, 0.675);
    REQUIRE(v >= 4.5 - 0.675);
    REQUIRE(v <= 4.5 + 0.675);
  }
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> base(50);
  for (int i = 0; i < 50; ++i) base[static_cast<std::size_t>(i)] = i;

  std::vector<int> a = base, b = base;
  SplitRng ra(81), rb(81);
  ra.shuffle(a);
  rb.shuffle(b);
  CHECK(a == b);
  CHECK(a != base);

  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == base);
}
