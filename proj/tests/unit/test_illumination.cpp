#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "iaf/illumination.hpp"
#include "iaf/synth.hpp"

using namespace iaf;
using namespace iaf::illumination;

namespace {

/// A small, quick network for the training checks.
IanConfig tiny() {
  IanConfig c;
  c.input_size = 16;
  c.conv1_channels = 4;
  c.conv2_channels = 4;
  c.fc1_units = 8;
  return c;
}

std::vector<LabeledImage> separable(std::size_t n) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool day = i % 2 == 0;
    Image img(16, 16, 3, day ? 200 : 30);
    img.at(i % 16, (3 * i) % 16, 1) = static_cast<std::uint8_t>(day ? 120 : 90);
    out.push_back({img, day ? Condition::Day : Condition::Night});
  }
  return out;
}

}  // namespace

TEST_SUITE("illumination") {
  TEST_CASE("key estimate") {
    CHECK(key_estimate(Image(8, 8, 3, 0)) == 0.0);
    CHECK(key_estimate(Image(8, 8, 3, 255)) == 1.0);
    CHECK(key_estimate(Image(8, 8, 3, 128)) == doctest::Approx(0.50196).epsilon(1e-5));
  }

  TEST_CASE("range estimate") {
    CHECK(range_estimate(Image(8, 8, 3, 90)) == 0.0);
    Image half(2, 4, 3, 0);
    for (std::size_t x = 2; x < 4; ++x)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t c = 0; c < 3; ++c) half.at(y, x, c) = 255;
    CHECK(range_estimate(half) == 1.0);
    Image ramp(1, 256, 3);
    for (std::size_t i = 0; i < 256; ++i)
      for (std::size_t c = 0; c < 3; ++c) ramp.at(0, i, c) = static_cast<std::uint8_t>(i);
    // Nearest ranks 231 and 26 give samples 230 and 25.
    CHECK(range_estimate(ramp) == doctest::Approx(205.0 / 255.0).epsilon(1e-12));
    CHECK(range_estimate(ramp) == doctest::Approx(0.8).epsilon(0.01));
  }

  TEST_CASE("estimators stay in [0,1] and ignore pixel order") {
    Rng rng(1);
    for (int t = 0; t < 30; ++t) {
      Image img(5, 6, 3);
      for (auto& v : img.data()) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
      Image perm = img;
      shuffle(perm.data(), rng);
      const double k = key_estimate(img), r = range_estimate(img);
      REQUIRE(k >= 0.0);
      REQUIRE(k <= 1.0);
      REQUIRE(r >= 0.0);
      REQUIRE(r <= 1.0);
      REQUIRE(k == key_estimate(perm));
      REQUIRE(r == range_estimate(perm));
    }
  }

  TEST_CASE("network output is a probability") {
    IanModel ian;
    Rng rng(2);
    ian.init(rng);
    for (int t = 0; t < 3; ++t) {
      Image img(40 + 10 * t, 50, 3);
      for (auto& v : img.data()) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
      const double iv = ian.infer(img);
      REQUIRE(iv > 0.0);
      REQUIRE(iv < 1.0);
      const auto p = nn::softmax(ian.logits(ian_input(img)));
      REQUIRE(p[kDayClass] + p[kNightClass] == doctest::Approx(1.0).epsilon(1e-15));
      REQUIRE(ian.infer(img) == iv);
    }
  }

  TEST_CASE("zeroed output layer gives one half") {
    IanModel ian;
    Rng rng(3);
    ian.init(rng);
    ian.fc2().weight.value.fill(0.0);
    ian.fc2().bias.value.fill(0.0);
    CHECK(ian.infer(Image(64, 64, 3, 99)) == 0.5);
  }

  TEST_CASE("training schedule and loss") {
    const auto data = separable(150);
    IanTrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.seed = 4;
    const auto res = ian_train(data, cfg, tiny());
    CHECK(res.steps.size() == 2 * 3);  // 2 epochs of ceil(150 / 64) steps
    CHECK(res.steps.back().epoch == 2);
    REQUIRE(res.epoch_losses.size() == 3);
    CHECK(res.epoch_losses[2] <= res.epoch_losses[0]);
  }

  TEST_CASE("training is deterministic and needs both classes") {
    const auto data = separable(70);
    IanTrainConfig cfg;
    cfg.seed = 5;
    const auto a = ian_train(data, cfg, tiny()), b = ian_train(data, cfg, tiny());
    CHECK(serialize_checkpoint(a.model.to_checkpoint()) == serialize_checkpoint(b.model.to_checkpoint()));
    std::vector<LabeledImage> days;
    for (const auto& d : data) {
      if (d.condition == Condition::Day) days.push_back(d);
    }
    CHECK_THROWS_AS(ian_train(days, cfg, tiny()), std::invalid_argument);
  }

  TEST_CASE("checkpoint round trip keeps predictions") {
    IanModel ian(tiny());
    Rng rng(6);
    ian.init(rng);
    const Checkpoint ckpt = ian.to_checkpoint();
    const IanModel back = IanModel::from_checkpoint(parse_checkpoint(serialize_checkpoint(ckpt)));
    const Image img(20, 20, 3, 140);
    CHECK(back.infer(img) == ian.infer(img));
    CHECK(back.config().conv1_channels == 4);
  }

  TEST_CASE("synthetic night frames are darker than day frames") {
    synth::SceneConfig cfg;
    std::vector<double> day, night;
    for (std::uint64_t i = 0; i < 200; ++i) {
      const auto f = synth::generate_frame(cfg, i);
      (f.pair.condition == Condition::Day ? day : night).push_back(key_estimate(f.pair.color));
    }
    REQUIRE(!day.empty());
    REQUIRE(!night.empty());
    CHECK(*std::max_element(night.begin(), night.end()) < *std::min_element(day.begin(), day.end()));
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    CHECK(median(night) < median(day));
  }
}
