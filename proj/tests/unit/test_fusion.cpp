#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "iaf/fileutil.hpp"
#include "iaf/fusion.hpp"
#include "oracles.hpp"

using namespace iaf;
using namespace iaf::fusion;

namespace {

StreamOutput random_stream(std::size_t n, Rng& rng) {
  StreamOutput s;
  for (std::size_t i = 0; i < n; ++i) {
    s.proposals.push_back(oracle::random_box(rng, 40, 20));
    const double p = uniform01(rng);
    s.scores.push_back({1.0 - p, p});
    s.offsets.push_back({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)});
  }
  return s;
}

/// Night images where the thermal head is right and the color head guesses;
/// day images where both are right.
std::vector<GateImage> gate_data(std::size_t n, Rng& rng) {
  std::vector<GateImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    GateImage img;
    const bool day = i % 2 == 0;
    img.iv = day ? uniform(rng, 0.9, 1.0) : uniform(rng, 0.0, 0.1);
    for (int r = 0; r < 8; ++r) {
      GateRoi roi;
      roi.label = r < 2 ? 1 : 0;
      const double good = roi.label == 1 ? uniform(rng, 0.7, 0.95) : uniform(rng, 0.05, 0.3);
      const double guess = uniform(rng, 0.3, 0.7);
      roi.s_thermal = {1 - good, good};
      const double c = day ? good : guess;
      roi.s_color = {1 - c, c};
      roi.t_color = {uniform(rng, -0.2, 0.2), 0, 0.1, 0};
      roi.t_thermal = {0, uniform(rng, -0.2, 0.2), 0, -0.1};
      roi.target = {0.05, 0.05, 0, 0};
      img.rois.push_back(roi);
    }
    out.push_back(img);
  }
  return out;
}

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("gate examples") {
    CHECK(gate(0.0, GateParams(3.0, 0.2)) == 0.0);
    CHECK(gate(0.5, GateParams()) == doctest::Approx(0.5 / 1.1).epsilon(1e-12));
    CHECK(gate(1.0, GateParams()) == doctest::Approx(1.0 / (1.0 + 0.1 * std::exp(-0.5))).epsilon(1e-12));
    CHECK(std::abs(gate(1.0, GateParams()) - 0.942815) < 1e-6);
  }

  TEST_CASE("gate clamps the illumination value") {
    CHECK(gate(1.3, GateParams()) == gate(1.0, GateParams()));
    CHECK(gate(-0.2, GateParams()) == 0.0);
  }

  TEST_CASE("gate parameters must be positive") {
    CHECK_THROWS(GateParams(0.0, 1.0));
    CHECK_THROWS(GateParams(1.0, -1.0));
    const GateParams p = GateParams::from_log(-30.0, 40.0);
    CHECK(p.alpha() > 0.0);
    CHECK(p.beta() > 0.0);
  }

  TEST_CASE("gate invariants on random samples") {
    Rng rng(1);
    std::vector<std::pair<double, double>> ab;
    for (int t = 0; t < 10000; ++t) {
      const GateParams p(uniform(rng, 0.01, 10.0) + 1e-12, uniform(rng, 0.01, 10.0) + 1e-12);
      const double iv = uniform01(rng);
      const double w = gate(iv, p);
      REQUIRE(w >= 0.0);
      REQUIRE(w <= iv);
      const FusionWeights fw = weights_for(WeightingMode::IlluminationAware, iv, p);
      REQUIRE(fw.color + fw.thermal() == 1.0);
      const double iv2 = std::min(1.0, iv + 1e-3);
      if (iv2 > iv) REQUIRE(gate(iv2, p) > w);
    }
  }

  TEST_CASE("gate derivatives match finite differences") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      const double la = uniform(rng, -4, 2), lb = uniform(rng, -3, 2), iv = uniform(rng, 0.01, 1.0);
      const auto d = gate_with_derivatives(iv, GateParams::from_log(la, lb));
      const double h = 1e-6;
      const double na = (gate(iv, GateParams::from_log(la + h, lb)) - gate(iv, GateParams::from_log(la - h, lb))) / (2 * h);
      const double nb = (gate(iv, GateParams::from_log(la, lb + h)) - gate(iv, GateParams::from_log(la, lb - h))) / (2 * h);
      REQUIRE(oracle::rel_err(d.dw_dlog_alpha, na, 1e-4) < 1e-5);
      REQUIRE(oracle::rel_err(d.dw_dlog_beta, nb, 1e-4) < 1e-5);
    }
  }

  TEST_CASE("weighting modes") {
    for (double iv : {0.0, 0.3, 1.0}) CHECK(weights_for(WeightingMode::Average, iv, {}).color == 0.5);
    CHECK(weights_for(WeightingMode::Hard01, 0.2, {}).color == 0.0);
    CHECK(weights_for(WeightingMode::Hard01, 0.8, {}).color == 1.0);
    const auto ia = weights_for(WeightingMode::IlluminationAware, 0.5, {});
    CHECK(ia.color == doctest::Approx(0.454545).epsilon(1e-6));
    CHECK(ia.thermal() == doctest::Approx(0.545455).epsilon(1e-6));
    CHECK(weighting_from_string("hard01") == WeightingMode::Hard01);
    CHECK(to_string(WeightingMode::IlluminationAware) == "ia");
    CHECK_THROWS(weighting_from_string("max"));
  }

  TEST_CASE("fuse examples") {
    Rng rng(3);
    const StreamOutput c = random_stream(7, rng), t = random_stream(7, rng);
    const StreamOutput only_color = fuse(c, t, {1.0});
    CHECK(only_color.scores == c.scores);
    CHECK(only_color.offsets == c.offsets);
    CHECK(fuse(c, t, weights_for(WeightingMode::Average, 0.3, {})).scores == fuse(c, t, {0.5}).scores);

    StreamOutput a, b;
    a.proposals = b.proposals = {BBox(0, 0, 4, 8)};
    a.scores = {{0.2, 0.8}};
    b.scores = {{0.6, 0.4}};
    a.offsets = b.offsets = {RegressionTarget{}};
    const auto f = fuse(a, b, {0.25});
    CHECK(f.scores[0][0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(f.scores[0][1] == doctest::Approx(0.5).epsilon(1e-15));

    CHECK_THROWS_AS(fuse(random_stream(3, rng), random_stream(4, rng), {0.5}), std::invalid_argument);
  }

  TEST_CASE("fuse is linear and convex") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const StreamOutput c = random_stream(5, rng), t = random_stream(5, rng);
      const double w = uniform01(rng);
      const auto f = fuse(c, t, {w}), fc = fuse(c, t, {1.0}), ft = fuse(c, t, {0.0});
      for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t k = 0; k < 2; ++k) REQUIRE(std::abs(f.scores[i][k] - (w * fc.scores[i][k] + (1 - w) * ft.scores[i][k])) < 1e-12);
        REQUIRE(std::abs(f.scores[i][0] + f.scores[i][1] - 1.0) < 1e-12);
        const auto o = f.offsets[i].as_array(), oc = fc.offsets[i].as_array(), ot = ft.offsets[i].as_array();
        for (std::size_t k = 0; k < 4; ++k) REQUIRE(std::abs(o[k] - (w * oc[k] + (1 - w) * ot[k])) < 1e-12);
      }
    }
  }

  TEST_CASE("finalize thresholds, clips and suppresses") {
    StreamOutput s;
    s.proposals = {BBox(50, 50, 20, 20), BBox(51, 50, 20, 20), BBox(0, 0, 10, 20), BBox(20, 20, 10, 10)};
    s.scores = {{0.1, 0.9}, {0.2, 0.8}, {0.7, 0.3}, {0.995, 0.005}};
    s.offsets.assign(4, RegressionTarget{});
    const auto d = finalize_detections(s, FinalizeConfig{});
    REQUIRE(d.size() == 2);
    CHECK(d[0].score == 0.9);
    CHECK(d[0].box == BBox(50, 50, 14, 14));
    CHECK(d[1].score == 0.3);
  }

  TEST_CASE("phase-2 loss gradient matches finite differences") {
    Rng rng(5);
    const auto data = gate_data(12, rng);
    for (bool box : {true, false}) {
      for (const GateImage& img : data) {
        const double la = uniform(rng, -3, 1), lb = uniform(rng, -1, 1);
        const auto l = fused_detection_loss(img, GateParams::from_log(la, lb), box);
        const double h = 1e-6;
        const double na = (fused_detection_loss(img, GateParams::from_log(la + h, lb), box).loss -
                           fused_detection_loss(img, GateParams::from_log(la - h, lb), box).loss) / (2 * h);
        const double nb = (fused_detection_loss(img, GateParams::from_log(la, lb + h), box).loss -
                           fused_detection_loss(img, GateParams::from_log(la, lb - h), box).loss) / (2 * h);
        REQUIRE(oracle::rel_err(l.d_log_alpha, na, 1e-4) < 1e-5);
        REQUIRE(oracle::rel_err(l.d_log_beta, nb, 1e-4) < 1e-5);
      }
    }
  }

  TEST_CASE("optimize_gate") {
    Rng rng(6);
    const auto data = gate_data(60, rng);
    GateTrainConfig cfg;
    cfg.seed = 7;
    CHECK_THROWS_AS(optimize_gate(std::vector<GateImage>{}, GateParams(), cfg), std::invalid_argument);
    const auto res = optimize_gate(data, GateParams(), cfg);
    CHECK(res.steps.size() == 3 * data.size());
    CHECK(res.epoch_losses.size() == 4);
    CHECK(res.epoch_losses.back() <= res.epoch_losses.front());
    CHECK(res.params.alpha() > 0.0);
    CHECK(res.params.beta() > 0.0);
    const auto again = optimize_gate(data, GateParams(), cfg);
    CHECK(again.params == res.params);

    std::vector<double> w_thermal;
    for (const auto& img : data) {
      if (img.iv < 0.5) w_thermal.push_back(1.0 - gate(img.iv, res.params));
    }
    std::sort(w_thermal.begin(), w_thermal.end());
    CHECK(w_thermal[w_thermal.size() / 2] > 0.5);
  }

  TEST_CASE("gate file round trip") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
      const GateParams p = GateParams::from_log(uniform(rng, -5, 5), uniform(rng, -5, 5));
      const std::string text = serialize_gate(p);
      REQUIRE(parse_gate(text) == p);
      REQUIRE(serialize_gate(parse_gate(text)) == text);
    }
    CHECK_THROWS_AS(parse_gate("alpha = 0.1\n"), ParseError);
    CHECK_THROWS_AS(parse_gate("alpha = 0.1\nbeta = -1\n"), ParseError);
    CHECK_THROWS_AS(parse_gate("alpha = x\nbeta = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_gate("alpha = 1\nbeta = 1\ngamma = 2\n"), ParseError);
  }
}
