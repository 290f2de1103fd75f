#include <doctest.h>

#include <cmath>
#include <limits>

#include "iaf/boxes.hpp"
#include "oracles.hpp"

using namespace iaf;

TEST_SUITE("boxes") {
  TEST_CASE("construction rejects degenerate boxes") {
    CHECK_THROWS_AS(BBox(0, 0, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(BBox(0, 0, 1, -2), std::invalid_argument);
    CHECK_THROWS_AS(BBox(std::nan(""), 0, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(BBox(0, std::numeric_limits<double>::infinity(), 1, 1), std::invalid_argument);
    CHECK_FALSE(box_from_corners(3, 3, 3, 5).has_value());
    CHECK(*box_from_corners(1, 2, 4, 6) == BBox(1, 2, 3, 4));
  }

  TEST_CASE("clip") {
    CHECK(*clip_box(BBox(-2, -2, 6, 6), 10, 10) == BBox(0, 0, 4, 4));
    CHECK_FALSE(clip_box(BBox(12, 0, 3, 3), 10, 10).has_value());
  }

  TEST_CASE("iou examples") {
    const BBox a(0, 0, 2, 2);
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, BBox(5, 5, 1, 1)) == 0.0);
    CHECK(iou(a, BBox(1, 0, 2, 2)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  TEST_CASE("ioa examples") {
    CHECK(ioa(BBox(1, 1, 2, 2), BBox(0, 0, 10, 10)) == 1.0);
    CHECK(ioa(BBox(0, 0, 2, 2), BBox(5, 5, 2, 2)) == 0.0);
    CHECK(ioa(BBox(0, 0, 2, 2), BBox(1, 0, 4, 4)) == doctest::Approx(0.5));
  }

  TEST_CASE("iou properties on random pairs") {
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
      const BBox a = oracle::random_box(rng), b = oracle::random_box(rng);
      const double ab = iou(a, b);
      REQUIRE(ab == iou(b, a));
      REQUIRE(iou(a, a) == 1.0);
      REQUIRE(ab >= 0.0);
      REQUIRE(ab <= std::min(1.0, ioa(a, b)) + 1e-15);
      REQUIRE(ab == doctest::Approx(oracle::area_iou(a, b)).epsilon(1e-12));
    }
  }

  TEST_CASE("nms examples") {
    const std::vector<ScoredBox> one{{BBox(1, 1, 4, 8), 0.7}};
    CHECK(nms(one, 0.3) == one);
    const std::vector<ScoredBox> twins{{BBox(1, 1, 4, 8), 0.8}, {BBox(1, 1, 4, 8), 0.9}};
    const auto kept = nms(twins, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
    CHECK_THROWS_AS(nms(one, 1.0), std::invalid_argument);
  }

  TEST_CASE("nms equal scores keep the lower index") {
    const std::vector<ScoredBox> d{{BBox(0, 0, 4, 4), 0.5}, {BBox(0, 0, 4, 4), 0.5}};
    CHECK(nms_indices(d, 0.3) == std::vector<std::size_t>{0});
  }

  TEST_CASE("nms matches the greedy oracle and is idempotent") {
    Rng rng(5);
    for (int t = 0; t < 300; ++t) {
      std::vector<ScoredBox> d;
      const std::size_t n = 1 + uniform_index(rng, 8);
      for (std::size_t i = 0; i < n; ++i) {
        d.push_back({oracle::random_box(rng, 12.0, 8.0), std::floor(uniform(rng, 0, 5)) / 4.0});
      }
      const double tau = uniform(rng, 0.1, 0.7);
      REQUIRE(nms_indices(d, tau) == oracle::greedy_nms(d, tau));
      const auto once = nms(d, tau);
      REQUIRE(nms(once, tau) == once);
    }
  }

  TEST_CASE("encode and decode") {
    const BBox a(0, 0, 10, 10);
    CHECK(encode(a, a) == RegressionTarget{0, 0, 0, 0});
    const RegressionTarget t = encode(a, BBox(5, 0, 10, 10));
    CHECK(t.tx == 0.5);
    CHECK(t.ty == 0.0);
    CHECK(t.tw == 0.0);
    CHECK(t.th == 0.0);
  }

  TEST_CASE("encode/decode round trip") {
    Rng rng(3);
    int checked = 0;
    while (checked < 10000) {
      const BBox a = oracle::random_box(rng), g = oracle::random_box(rng);
      const RegressionTarget t = encode(a, g);
      if (std::abs(t.tw) >= kScaleClamp || std::abs(t.th) >= kScaleClamp) continue;
      const BBox r = decode(a, t);
      REQUIRE(std::abs(r.x() - g.x()) < 1e-9);
      REQUIRE(std::abs(r.y() - g.y()) < 1e-9);
      REQUIRE(std::abs(r.w() - g.w()) < 1e-9);
      REQUIRE(std::abs(r.h() - g.h()) < 1e-9);
      ++checked;
    }
  }

  TEST_CASE("decode clamps the scale terms") {
    const BBox b = decode(BBox(0, 0, 1, 1), {0, 0, 50, -50});
    CHECK(b.w() == doctest::Approx(std::exp(kScaleClamp)));
    CHECK(b.h() == doctest::Approx(std::exp(-kScaleClamp)));
  }
}
