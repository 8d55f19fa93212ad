#include <stdexcept>
#include <cmath>
#include <numbers>

#include "cursive/rng.hpp"
#include "cursive/stroke.hpp"
#include "doctest.h"

using namespace cursive;

namespace {

StrokeSequence random_sequence(Rng& rng, std::size_t n) {
  StrokeSequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform() < 0.8});
  return s;
}

}  // namespace

TEST_CASE("coords_to_offsets anchors the first point at the origin") {
  CHECK(coords_to_offsets(StrokeSequence{{0, 0, true}}) == std::vector<CartesianOffset>{{0, 0, true}});
  CHECK(coords_to_offsets(StrokeSequence{{0, 0, true}, {3, 4, true}}) ==
        std::vector<CartesianOffset>{{0, 0, true}, {3, 4, true}});
  CHECK(coords_to_offsets(StrokeSequence{{1, 1, true}, {1, 1, false}}) ==
        std::vector<CartesianOffset>{{1, 1, true}, {0, 0, false}});
  CHECK_THROWS_AS(coords_to_offsets(StrokeSequence{}), std::invalid_argument);
}

TEST_CASE("offsets_to_coords is a cumulative sum") {
  CHECK(offsets_to_coords(std::vector<CartesianOffset>{{0, 0, true}, {3, 4, true}}) ==
        StrokeSequence{{0, 0, true}, {3, 4, true}});
  CHECK(offsets_to_coords(std::vector<CartesianOffset>{}).empty());
}

TEST_CASE("coordinate round trip over random sequences") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_sequence(rng, 1 + rng.below(60));
    const auto back = offsets_to_coords(coords_to_offsets(s));
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(std::abs(back[i].x - s[i].x) <= 1e-9);
      CHECK(std::abs(back[i].y - s[i].y) <= 1e-9);
      CHECK(back[i].pen == s[i].pen);
    }
  }
}

TEST_CASE("cartesian_to_polar examples") {
  const auto a = cartesian_to_polar({1, 0, true});
  CHECK(a.theta == 0.0);
  CHECK(a.r == 1.0);
  CHECK(a.pen);
  const auto b = cartesian_to_polar({0, 2, false});
  CHECK(b.theta == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  CHECK(b.r == 2.0);
  CHECK_FALSE(b.pen);
  const auto c = cartesian_to_polar({3, 4, true});
  CHECK(c.theta == doctest::Approx(0.927295218001612).epsilon(1e-12));
  CHECK(c.r == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("cartesian_to_polar folds pi into the half-open range and zero radius to theta 0") {
  const auto left = cartesian_to_polar({-1, 0, true});
  CHECK(left.theta == -std::numbers::pi);
  const auto zero = cartesian_to_polar({0, 0, true});
  CHECK(zero.theta == 0.0);
  CHECK(zero.r == 0.0);
}

TEST_CASE("polar_to_cartesian examples") {
  CHECK(polar_to_cartesian({0, 1, true}) == CartesianOffset{1, 0, true});
  const auto z = polar_to_cartesian({std::numbers::pi, 0, false});
  CHECK(z.dx == 0.0);
  CHECK(std::abs(z.dy) == 0.0);
  CHECK_FALSE(z.pen);
}

TEST_CASE("polar round trip over random offsets") {
  Rng rng(12);
  for (int i = 0; i < 10000; ++i) {
    const CartesianOffset o{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform() < 0.5};
    const auto p = cartesian_to_polar(o);
    CHECK(p.theta >= -std::numbers::pi);
    CHECK(p.theta < std::numbers::pi);
    CHECK(p.r >= 0.0);
    const auto back = polar_to_cartesian(p);
    CHECK(std::abs(back.dx - o.dx) <= 1e-9);
    CHECK(std::abs(back.dy - o.dy) <= 1e-9);
    CHECK(back.pen == o.pen);
  }
}

TEST_CASE("apply_affine arithmetic") {
  const StrokeSequence s{{2, 3, true}};
  CHECK(apply_affine(s, {}) == s);
  const auto sheared = apply_affine(s, {0.5, 1, 1});
  CHECK(sheared[0].x == doctest::Approx(3.5));
  CHECK(sheared[0].y == doctest::Approx(3.0));
  const auto scaled = apply_affine(s, {0, 1.1, 0.9});
  CHECK(scaled[0].x == doctest::Approx(2.2));
  CHECK(scaled[0].y == doctest::Approx(2.7));
  CHECK_THROWS_AS(apply_affine(s, {0, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(apply_affine(s, {0, 1, -1}), std::invalid_argument);
}

TEST_CASE("identity affine is exact on random sequences") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_sequence(rng, 1 + rng.below(40));
    CHECK(apply_affine(s, {}) == s);
  }
}

TEST_CASE("composed affine equals sequential application") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_sequence(rng, 1 + rng.below(40));
    const AffineParams a{rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
    const AffineParams b{rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
    const auto twice = apply_affine(apply_affine(s, a), b);
    const auto once = apply_affine(s, compose(a, b));
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(once[i].x == doctest::Approx(twice[i].x).epsilon(1e-12));
      CHECK(once[i].y == doctest::Approx(twice[i].y).epsilon(1e-12));
      CHECK(once[i].pen == s[i].pen);
    }
  }
}

TEST_CASE("pen runs partition the sequence") {
  const StrokeSequence s{{0, 0, false}, {1, 0, true}, {2, 0, true}, {3, 0, false}, {4, 0, false}, {5, 0, true}};
  const auto runs = pen_runs(s);
  REQUIRE(runs.size() == 3);
  CHECK(runs[0] == PenRun{0, 2});
  CHECK(runs[1] == PenRun{3, 3});
  CHECK(runs[2] == PenRun{4, 5});
  CHECK(count_drawn_runs(s) == 2);
  const auto box = bounding_box(s);
  CHECK(box.width() == 5.0);
  CHECK(box.height() == 0.0);
}
