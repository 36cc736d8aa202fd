#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "accident/graph.hpp"

using namespace accident;

TEST_CASE("centers are box midpoints") {
  Tensor boxes(2, 4);
  boxes(0, 0) = 100;
  boxes(0, 1) = 100;
  boxes(0, 2) = 200;
  boxes(0, 3) = 200;
  boxes(1, 0) = 50;
  boxes(1, 1) = 60;
  boxes(1, 2) = 50;
  boxes(1, 3) = 60;
  Tensor c = centers(boxes);
  CHECK(c(0, 0) == 150.0);
  CHECK(c(0, 1) == 150.0);
  CHECK(c(1, 0) == 50.0);
  CHECK(c(1, 1) == 60.0);
}

TEST_CASE("centers always land inside their boxes") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  std::uniform_real_distribution<double> w(0.0, 300.0);
  Tensor boxes(1000, 4);
  for (int i = 0; i < 1000; ++i) {
    boxes(i, 0) = u(rng);
    boxes(i, 1) = u(rng);
    boxes(i, 2) = boxes(i, 0) + w(rng);
    boxes(i, 3) = boxes(i, 1) + w(rng);
  }
  Tensor c = centers(boxes);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c(i, 0) >= boxes(i, 0));
    CHECK(c(i, 0) <= boxes(i, 2));
    CHECK(c(i, 1) >= boxes(i, 1));
    CHECK(c(i, 1) <= boxes(i, 3));
  }
}

TEST_CASE("diag_norm matches Pythagoras and the compat constant") {
  CHECK(diag_norm(1280, 720) == doctest::Approx(1468.6047800548656).epsilon(1e-9));
  CHECK(diag_norm(1280, 720, true) == 1450.0);
  CHECK(diag_norm(720, 1280, true) == 1450.0);
  CHECK(diag_norm(300, 400) == doctest::Approx(500.0));
  CHECK(diag_norm(3e3, 4e3) == doctest::Approx(5e3));
  CHECK_THROWS_AS(diag_norm(0, 10), std::invalid_argument);
}

TEST_CASE("pairwise_distance3d: 3-4-5 and masking") {
  Tensor c(3, 2);
  c(0, 0) = 0;
  c(0, 1) = 0;
  c(1, 0) = 3;
  c(1, 1) = 0;
  c(2, 0) = 500;
  c(2, 1) = 500;
  std::vector<double> depths = {0.0, 4.0, 9.0};
  std::vector<bool> present = {true, true, false};
  Tensor d = pairwise_distance3d(c, depths, 1.0, 1.0, present);
  CHECK(d(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(d(1, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(d(0, 0) == 0.0);
  CHECK(d(1, 1) == 0.0);
  CHECK(d(0, 2) == 0.0);  // masked slot
  CHECK(d(2, 1) == 0.0);
}

TEST_CASE("pairwise_distance3d matches a brute-force reference") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 12;
  const double dd = 1468.6;
  const double scale = 100.0;
  Tensor c(n, 2);
  std::vector<double> depths(n);
  std::vector<bool> present(n);
  for (int i = 0; i < n; ++i) {
    c(i, 0) = u(rng) * 1280;
    c(i, 1) = u(rng) * 720;
    depths[i] = u(rng) * 80;
    present[i] = u(rng) > 0.25;
  }
  Tensor d = pairwise_distance3d(c, depths, dd, scale, present);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double expected = 0.0;
      if (i != j && present[i] && present[j]) {
        const double pix = std::hypot(c(i, 0) - c(j, 0), c(i, 1) - c(j, 1)) / dd;
        const double dep = std::fabs(depths[i] - depths[j]) / scale;
        expected = std::sqrt(pix * pix + dep * dep);
      }
      CHECK(d(i, j) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

namespace {

std::vector<Tensor> full_masks(int frames, int n) {
  std::vector<Tensor> masks;
  for (int t = 0; t < frames; ++t) masks.push_back(Tensor::full(n, n, 1.0));
  return masks;
}

}  // namespace

TEST_CASE("relative_velocity: boundary, arithmetic, telescoping") {
  const int frames = 6, n = 2;
  std::vector<Tensor> dist;
  for (int t = 0; t < frames; ++t) {
    Tensor d(n, n);
    d(0, 1) = d(1, 0) = 5.0 - t;
    dist.push_back(d);
  }
  auto vel = relative_velocity(dist, full_masks(frames, n));
  CHECK(vel[0](0, 1) == 0.0);
  for (int t = 1; t < frames; ++t) CHECK(vel[t](0, 1) == doctest::Approx(-1.0));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> walk;
  for (int t = 0; t < 20; ++t) {
    Tensor d(n, n);
    d(0, 1) = d(1, 0) = u(rng);
    walk.push_back(d);
  }
  auto wvel = relative_velocity(walk, full_masks(20, n));
  double summed = 0.0;
  for (const auto& v : wvel) summed += v(0, 1);
  CHECK(summed == doctest::Approx(walk[19](0, 1) - walk[0](0, 1)).epsilon(1e-12));

  // constant distances give zero velocity everywhere
  std::vector<Tensor> flat(4, Tensor::full(n, n, 0.3));
  for (auto& d : flat) {
    d(0, 0) = 0;
    d(1, 1) = 0;
  }
  for (const auto& v : relative_velocity(flat, full_masks(4, n)))
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(v(i, j) == 0.0);
}

TEST_CASE("edge_weights reproduces the closed-form cases") {
  Tensor d(2, 2), v(2, 2), m = Tensor::full(2, 2, 1.0);
  CHECK(edge_weights(d, v, m, 1.0)(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

  d(0, 1) = d(1, 0) = std::log(2.0);
  v(0, 1) = v(1, 0) = 0.2;
  CHECK(edge_weights(d, v, m, 1.0)(0, 1) == doctest::Approx(0.35).epsilon(1e-12));

  Tensor d2 = Tensor::full(2, 2, 0.7);
  d2(0, 0) = d2(1, 1) = 0.0;
  Tensor v2(2, 2);
  CHECK(edge_weights(d2, v2, m, 1e6)(0, 1) == doctest::Approx(std::exp(-0.7)).epsilon(1e-6));

  CHECK_THROWS_AS(edge_weights(d, v, m, -1.5), std::invalid_argument);
}

TEST_CASE("edge_weights vel modes") {
  Tensor d(2, 2), v(2, 2), m = Tensor::full(2, 2, 1.0);
  v(0, 1) = v(1, 0) = -0.4;
  CHECK(edge_weights(d, v, m, 1.0, VelMode::Raw)(0, 1) == doctest::Approx(0.5 - 0.2));
  CHECK(edge_weights(d, v, m, 1.0, VelMode::Negated)(0, 1) == doctest::Approx(0.5 + 0.2));
  CHECK(edge_weights(d, v, m, 1.0, VelMode::Abs)(0, 1) == doctest::Approx(0.5 + 0.2));
}

TEST_CASE("geometry invariants: symmetry, monotonicity, translation invariance") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 8;
  Tensor c(n, 2);
  std::vector<double> depths(n);
  std::vector<bool> present(n, true);
  for (int i = 0; i < n; ++i) {
    c(i, 0) = u(rng) * 1280;
    c(i, 1) = u(rng) * 720;
    depths[i] = u(rng) * 60;
  }
  const double dd = diag_norm(1280, 720);
  Tensor d = pairwise_distance3d(c, depths, dd, 100.0, present);
  Tensor m = Tensor::full(n, n, 1.0);
  Tensor v(n, n);
  Tensor w = edge_weights(d, v, m, 1.7);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      CHECK(d(i, j) == d(j, i));
      CHECK(w(i, j) == w(j, i));
    }

  // monotone decreasing in distance with vel fixed
  Tensor dlo = Tensor::full(2, 2, 0.2), dhi = Tensor::full(2, 2, 0.9);
  Tensor m2 = Tensor::full(2, 2, 1.0), v2(2, 2);
  CHECK(edge_weights(dlo, v2, m2, 1.3)(0, 1) > edge_weights(dhi, v2, m2, 1.3)(0, 1));

  // shifting every center leaves the pipeline unchanged
  Tensor shifted = c;
  for (int i = 0; i < n; ++i) {
    shifted(i, 0) += 37.5;
    shifted(i, 1) -= 12.25;
  }
  Tensor d2 = pairwise_distance3d(shifted, depths, dd, 100.0, present);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(d2(i, j) == doctest::Approx(d(i, j)).epsilon(1e-12));
}

TEST_CASE("build_geometry derives masks from scores and zeroes frame 0 velocity") {
  FeatureBundle b = FeatureBundle::empty(3, 19, 4, 1280, 720);
  auto put = [&](int t, int slot, double cx, double cy, double depth) {
    b.box_at(t, slot, 0) = static_cast<float>(cx - 10);
    b.box_at(t, slot, 1) = static_cast<float>(cy - 10);
    b.box_at(t, slot, 2) = static_cast<float>(cx + 10);
    b.box_at(t, slot, 3) = static_cast<float>(cy + 10);
    b.score_at(t, slot) = 0.9f;
    b.depth_at(t, slot) = static_cast<float>(depth);
  };
  for (int t = 0; t < 3; ++t) {
    put(t, 2, 100 + 10 * t, 200, 20);
    put(t, 5, 400 - 10 * t, 200, 20);
  }
  GeometrySequence g = build_geometry(b, 100.0);
  CHECK(g.num_frames() == 3);
  CHECK(g.mask[0](2, 0) == 1.0);
  CHECK(g.mask[0](0, 0) == 0.0);
  CHECK(g.relvel[0](2, 5) == 0.0);
  CHECK(g.relvel[1](2, 5) < 0.0);  // approaching
  CHECK(g.dist3d[1](2, 5) < g.dist3d[0](2, 5));
  CHECK(g.pair_mask[0](2, 5) == 1.0);
  CHECK(g.pair_mask[0](2, 3) == 0.0);
}
