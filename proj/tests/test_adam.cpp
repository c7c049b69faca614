#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hjbppo/adam.hpp"
#include "hjbppo/checkpoint.hpp"
#include "hjbppo/errors.hpp"

using hjbppo::DivergenceError;
using hjbppo::opt::Adam;
using hjbppo::opt::clip_global_norm;
using hjbppo::opt::global_norm;

TEST_CASE("the first step moves each parameter by about the learning rate") {
  Adam adam(3);
  std::vector<double> params{1.0, -2.0, 0.5};
  const std::vector<double> grad{10.0, -0.03, 4.0};
  const double lr = 1e-3;
  adam.step(params, grad, lr, -1.0);
  // Bias correction makes the first update lr * g / (|g| + eps'), i.e. a
  // signed step of nearly lr regardless of the gradient's magnitude.
  CHECK(params[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
  CHECK(params[2] == doctest::Approx(0.5 - lr).epsilon(1e-6));
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("ascent and descent are mirror images") {
  Adam up(2);
  Adam down(2);
  std::vector<double> pu{0.0, 0.0};
  std::vector<double> pd{0.0, 0.0};
  const std::vector<double> grad{0.7, -1.3};
  for (int i = 0; i < 25; ++i) {
    up.step(pu, grad, 1e-2, +1.0);
    down.step(pd, grad, 1e-2, -1.0);
  }
  CHECK(pu[0] == -pd[0]);
  CHECK(pu[1] == -pd[1]);
}

TEST_CASE("negating the gradient negates the trajectory") {
  Adam a(2);
  Adam b(2);
  std::vector<double> pa{0.0, 0.0};
  std::vector<double> pb{0.0, 0.0};
  const std::vector<double> grad{0.9, -0.1};
  std::vector<double> neg{-0.9, 0.1};
  for (int i = 0; i < 10; ++i) {
    a.step(pa, grad, 3e-3, -1.0);
    b.step(pb, neg, 3e-3, -1.0);
  }
  CHECK(pa[0] == -pb[0]);
  CHECK(pa[1] == -pb[1]);
}

TEST_CASE("a zero gradient leaves parameters in place but advances the clock") {
  Adam adam(2);
  std::vector<double> params{0.25, -0.75};
  const std::vector<double> zero{0.0, 0.0};
  adam.step(params, zero, 1e-2, -1.0);
  CHECK(params[0] == 0.25);
  CHECK(params[1] == -0.75);
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("descent drives a quadratic to its minimum") {
  Adam adam(1);
  std::vector<double> p{5.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> grad{2.0 * p[0]};
    adam.step(p, grad, 0.05, -1.0);
  }
  CHECK(std::abs(p[0]) < 1e-3);
}

TEST_CASE("a non-finite gradient raises divergence and changes nothing") {
  Adam adam(2);
  Adam untouched(2);
  std::vector<double> params{1.0, 2.0};
  std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(adam.step(params, bad, 1e-3, -1.0), DivergenceError);
  CHECK(params == std::vector<double>{1.0, 2.0});
  CHECK(adam.steps_taken() == 0);
  CHECK(adam == untouched);

  bad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam.step(params, bad, 1e-3, -1.0), DivergenceError);
  CHECK(adam == untouched);

  // The optimizer remains fully usable afterwards.
  std::vector<double> clone_params{1.0, 2.0};
  const std::vector<double> good{0.5, -0.5};
  adam.step(params, good, 1e-3, -1.0);
  untouched.step(clone_params, good, 1e-3, -1.0);
  CHECK(params == clone_params);
}

TEST_CASE("dimension mismatches are rejected") {
  Adam adam(3);
  std::vector<double> params{1.0, 2.0};
  const std::vector<double> grad{0.1, 0.2};
  CHECK_THROWS_AS(adam.step(params, grad, 1e-3, -1.0), std::invalid_argument);
}

TEST_CASE("optimizer state round-trips through the binary format") {
  Adam adam(4, 0.85, 0.995, 1e-9);
  std::vector<double> params{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> grad{1.0, -1.0, 0.5, 0.0};
  for (int i = 0; i < 7; ++i) adam.step(params, grad, 2e-3, -1.0);

  hjbppo::io::BinaryWriter w;
  adam.serialize(w);
  hjbppo::io::BinaryReader r(w.bytes());
  Adam restored;
  restored.deserialize(r);
  CHECK(r.exhausted());
  CHECK(restored == adam);
  CHECK(restored.steps_taken() == 7);

  std::vector<double> pa = params;
  std::vector<double> pb = params;
  adam.step(pa, grad, 2e-3, -1.0);
  restored.step(pb, grad, 2e-3, -1.0);
  CHECK(pa == pb);
}

TEST_CASE("the global norm is Euclidean") {
  const std::vector<double> g{3.0, 4.0};
  CHECK(global_norm(g) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(global_norm(std::vector<double>{}) == 0.0);
}

TEST_CASE("clipping rescales only when the norm exceeds the cap") {
  std::vector<double> g{3.0, 4.0};
  const double pre = clip_global_norm(g, 1.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(global_norm(g) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.8).epsilon(1e-12));

  std::vector<double> small{0.3, 0.4};
  const double pre2 = clip_global_norm(small, 1.0);
  CHECK(pre2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(small == std::vector<double>{0.3, 0.4});
}
