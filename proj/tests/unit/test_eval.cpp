#include <doctest.h>

#include <cmath>

#include "iaf/eval.hpp"
#include "iaf/fileutil.hpp"
#include "oracles.hpp"

using namespace iaf;
using namespace iaf::eval;

namespace {

Frame random_frame(Rng& rng) {
  Frame f;
  const std::size_t n_gt = uniform_index(rng, 6), n_det = uniform_index(rng, 11);
  for (std::size_t g = 0; g < n_gt; ++g) f.gts.push_back({oracle::random_box(rng, 20, 12), bernoulli(rng, 0.3)});
  for (std::size_t d = 0; d < n_det; ++d) {
    BBox b = oracle::random_box(rng, 20, 12);
    if (!f.gts.empty() && bernoulli(rng, 0.5)) {
      const BBox& g = f.gts[uniform_index(rng, f.gts.size())].bbox;
      b = BBox(g.x() + std::floor(uniform(rng, -2, 3)), g.y() + std::floor(uniform(rng, -2, 3)), g.w(), g.h());
    }
    f.dets.push_back({b, std::floor(uniform(rng, 0, 6)) / 5.0});
  }
  std::stable_sort(f.dets.begin(), f.dets.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  f.condition = bernoulli(rng, 0.5) ? Condition::Day : Condition::Night;
  return f;
}

EvalConfig cfg() { return EvalConfig{}; }

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("reasonable filter") {
    const std::vector<GtEntry> gts{{Label::Person, BBox(0, 0, 30, 60), Occlusion::None, false},
                                   {Label::People, BBox(0, 0, 30, 60), Occlusion::None, false},
                                   {Label::Person, BBox(0, 0, 20, 40), Occlusion::None, false},
                                   {Label::Person, BBox(0, 0, 30, 60), Occlusion::Heavy, false},
                                   {Label::Person, BBox(0, 0, 30, 60), Occlusion::Partial, false},
                                   {Label::Person, BBox(0, 0, 30, 60), Occlusion::None, true},
                                   {Label::PersonUncertain, BBox(0, 0, 30, 60), Occlusion::None, false}};
    const auto r = apply_reasonable(gts, cfg());
    const std::vector<bool> ignore{false, true, true, true, false, true, true};
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i].ignore == ignore[i]);
  }

  TEST_CASE("match examples") {
    const std::vector<EvalGt> one{{BBox(10, 10, 10, 20), false}};
    const auto m = match_frame({{BBox(10, 10, 10, 20), 0.9}}, one, cfg());
    CHECK(m.det_outcomes[0] == MatchOutcome::TruePositive);
    CHECK(m.gt_matched[0]);

    const std::vector<EvalGt> ign{{BBox(0, 0, 40, 40), true}};
    const auto mi = match_frame({{BBox(5, 5, 10, 20), 0.9}}, ign, cfg());
    CHECK(mi.det_outcomes[0] == MatchOutcome::MatchedIgnore);
    CHECK(mi.evaluable_gts == 0);

    CHECK_THROWS(match_frame({{BBox(0, 0, 1, 1), 0.1}, {BBox(0, 0, 1, 1), 0.2}}, one, cfg()));
  }

  TEST_CASE("a gt is matched at most once") {
    const std::vector<EvalGt> one{{BBox(10, 10, 10, 20), false}};
    const auto m = match_frame({{BBox(10, 10, 10, 20), 0.9}, {BBox(10, 11, 10, 20), 0.8}}, one, cfg());
    CHECK(m.det_outcomes[0] == MatchOutcome::TruePositive);
    CHECK(m.det_outcomes[1] == MatchOutcome::FalsePositive);
  }

  TEST_CASE("match agrees with the brute-force greedy matcher") {
    Rng rng(1);
    for (int t = 0; t < 300; ++t) {
      const Frame f = random_frame(rng);
      const auto got = match_frame(f.dets, f.gts, cfg());
      const auto want = oracle::greedy_match(f.dets, f.gts, 0.5, 0.5);
      REQUIRE(got.det_outcomes == want.det_outcomes);
      REQUIRE(got.gt_matched == want.gt_matched);
      REQUIRE(got.evaluable_gts == want.evaluable_gts);
    }
  }

  TEST_CASE("curve examples") {
    Frame perfect;
    perfect.gts = {{BBox(0, 0, 10, 20), false}, {BBox(30, 30, 10, 20), false}};
    perfect.dets = {{BBox(0, 0, 10, 20), 1.0}, {BBox(30, 30, 10, 20), 1.0}};
    for (const auto& p : curve({perfect}, cfg())) CHECK(p.miss_rate == 0.0);

    Frame empty;
    empty.gts = perfect.gts;
    CHECK(curve({empty}, cfg()) == std::vector<CurvePoint>{{0.0, 1.0}});
    CHECK(log_average_miss_rate(curve({empty}, cfg()), cfg()) == 1.0);

    Frame a, b;
    a.gts = {{BBox(0, 0, 10, 20), false}};
    a.dets = {{BBox(0, 0, 10, 20), 0.9}, {BBox(30, 30, 10, 20), 0.6}};
    b.gts = {{BBox(5, 5, 10, 20), false}};
    b.dets = {{BBox(5, 5, 10, 20), 0.7}};
    CHECK(curve({a, b}, cfg()) == std::vector<CurvePoint>{{0.0, 0.5}, {0.0, 0.0}, {0.5, 0.0}});

    CHECK_THROWS(curve({}, cfg()));
    Frame no_gt;
    no_gt.dets = a.dets;
    CHECK_THROWS(curve({no_gt}, cfg()));
  }

  TEST_CASE("log-average miss rate examples") {
    for (double m : {1.0, 0.37, 0.05}) {
      const std::vector<CurvePoint> flat{{0.0, m}, {0.3, m}, {2.0, m}};
      CHECK(std::abs(log_average_miss_rate(flat, cfg()) - m) < 1e-12);
    }
    CHECK(cfg().fppi_refs.size() == 9);
    CHECK(cfg().fppi_refs[4] == 0.1);
    const std::vector<CurvePoint> two{{0.0, 0.4}, {0.1, 0.2}};
    const double expect = std::exp((4 * std::log(0.4) + 5 * std::log(0.2)) / 9.0);
    CHECK(log_average_miss_rate(two, cfg()) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(log_average_miss_rate({{0.0, 0.0}}, cfg()) == doctest::Approx(kMissRateFloor));
    // Points to the right of every reference never count.
    CHECK(log_average_miss_rate({{5.0, 0.0}}, cfg()) == 1.0);
  }

  TEST_CASE("curve properties") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      std::vector<Frame> frames;
      for (int k = 0; k < 4; ++k) frames.push_back(random_frame(rng));
      frames[0].gts.push_back({BBox(50, 50, 10, 20), false});
      const auto c = curve(frames, cfg());
      for (std::size_t i = 1; i < c.size(); ++i) {
        REQUIRE(c[i].fppi >= c[i - 1].fppi);
        REQUIRE(c[i].miss_rate <= c[i - 1].miss_rate);
      }
      const double base = log_average_miss_rate(c, cfg());

      auto squashed = frames;
      for (auto& f : squashed)
        for (auto& d : f.dets) d.score = std::pow(d.score, 3.0) * 0.5 + 0.1;
      REQUIRE(curve(squashed, cfg()) == c);

      // A lowest-scored detection sitting inside an ignore region changes nothing.
      auto with_ignore = frames;
      with_ignore[1].gts.push_back({BBox(100, 100, 30, 30), true});
      with_ignore[1].dets.push_back({BBox(105, 105, 10, 10), 0.0});
      REQUIRE(log_average_miss_rate(curve(with_ignore, cfg()), cfg()) == base);
    }
  }

  TEST_CASE("condition breakdown") {
    Frame day, night;
    day.condition = Condition::Day;
    night.condition = Condition::Night;
    day.gts = {{BBox(0, 0, 10, 20), false}};
    day.dets = {{BBox(0, 0, 10, 20), 0.9}};
    night.gts = {{BBox(0, 0, 10, 20), true}};
    const auto b = evaluate_by_condition({day, night}, cfg());
    REQUIRE(b.all.has_value());
    REQUIRE(b.day.has_value());
    CHECK_FALSE(b.night.has_value());
    CHECK(b.day->lamr == doctest::Approx(kMissRateFloor));
  }

  TEST_CASE("curve csv round trip") {
    const std::vector<CurvePoint> c{{0.0, 1.0}, {0.1, 0.3333333333333333}, {2.5, 1e-3}};
    const std::string text = curve_csv(c);
    CHECK(text.rfind("fppi,miss_rate\n", 0) == 0);
    CHECK(parse_curve_csv(text, "c") == c);
    CHECK(curve_csv(parse_curve_csv(text, "c")) == text);
    CHECK_THROWS_AS(parse_curve_csv("x,y\n", "c"), ParseError);
    CHECK_THROWS_AS(parse_curve_csv("fppi,miss_rate\n0.1;0.2\n", "c"), ParseError);
  }
}
