#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdr/rng.hpp"

using pdr::RngStream;

TEST_CASE("same seed replays identically") {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("children are independent of parent consumption") {
  RngStream a(5);
  RngStream c1 = a.child(7);
  for (int i = 0; i < 50; ++i) (void)a.uniform();
  RngStream c2 = a.child(7);
  for (int i = 0; i < 20; ++i) CHECK(c1.normal() == c2.normal());
}

TEST_CASE("distinct keys give distinct streams") {
  RngStream a(5);
  RngStream c1 = a.child(1);
  RngStream c2 = a.child(2);
  bool same = true;
  for (int i = 0; i < 8; ++i) same = same && (c1.uniform() == c2.uniform());
  CHECK_FALSE(same);
}

TEST_CASE("copies replay") {
  RngStream a(99);
  (void)a.normal();
  RngStream b = a;
  for (int i = 0; i < 20; ++i) CHECK(a.poisson(3.0) == b.poisson(3.0));
}

TEST_CASE("moments are sane") {
  RngStream a(2024);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sp = 0;
  for (int i = 0; i < n; ++i) {
    su += a.uniform(2.0, 4.0);
    double z = a.normal(1.0, 0.5);
    sn += z;
    sn2 += z * z;
    sp += static_cast<double>(a.poisson(2.5));
  }
  CHECK(su / n == doctest::Approx(3.0).epsilon(0.01));
  CHECK(sn / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(sn2 / n - (sn / n) * (sn / n) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(sp / n == doctest::Approx(2.5).epsilon(0.01));

  double sb = 0;
  for (int i = 0; i < 50000; ++i) sb += a.beta(2.0, 5.0);
  CHECK(sb / 50000 == doctest::Approx(2.0 / 7.0).epsilon(0.02));

  double sg = 0;
  for (int i = 0; i < 50000; ++i) sg += a.gamma(2.0, 2.0);
  CHECK(sg / 50000 == doctest::Approx(4.0).epsilon(0.02));
}
