#include <doctest.h>

#include <algorithm>

#include "iaf/fileutil.hpp"
#include "iaf/imaging.hpp"
#include "iaf/random.hpp"

using namespace iaf;

namespace {

Image random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  Image img(h, w, c);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return img;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("resize identity and constants") {
    Rng rng(1);
    const Image img = random_image(5, 7, 3, rng);
    CHECK(resize_bilinear(img, 5, 7) == img);
    const Image flat(4, 6, 1, 77);
    CHECK(resize_bilinear(flat, 9, 2) == Image(9, 2, 1, 77));
    CHECK(resize_bilinear(flat, 1, 1) == Image(1, 1, 1, 77));
  }

  TEST_CASE("resize 2x2 ramp to 2x1") {
    const Image img(2, 2, 1, std::vector<std::uint8_t>{0, 255, 0, 255});
    CHECK(resize_bilinear(img, 2, 1) == Image(2, 1, 1, std::vector<std::uint8_t>{128, 128}));
  }

  TEST_CASE("resize stays within the input range") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
      const Image img = random_image(2 + uniform_index(rng, 9), 2 + uniform_index(rng, 9), 1, rng);
      const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
      const Image out = resize_bilinear(img, 1 + uniform_index(rng, 20), 1 + uniform_index(rng, 20));
      for (auto v : out.data()) {
        REQUIRE(v + 1 >= *lo);
        REQUIRE(v <= *hi + 1);
      }
    }
  }

  TEST_CASE("mean pixel") {
    CHECK(mean_pixel(Image(3, 3, 3, 0)) == 0.0);
    CHECK(mean_pixel(Image(3, 3, 3, 255)) == 1.0);
    CHECK(mean_pixel(Image(3, 3, 1, 128)) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  }

  TEST_CASE("nearest-rank percentile") {
    CHECK(percentile(Image(4, 4, 3, 42), 37.5) == 42);
    const Image ramp(1, 10, 1, std::vector<std::uint8_t>{7, 3, 1, 10, 2, 9, 4, 6, 5, 8});
    CHECK(percentile(ramp, 10) == 1);
    CHECK(percentile(ramp, 90) == 9);
    CHECK(percentile(ramp, 100) == 10);
    CHECK(percentile(ramp, 0) == 1);
    CHECK_THROWS(percentile(ramp, 101));
  }

  TEST_CASE("percentile is monotone and returns a sample") {
    Rng rng(3);
    const Image img = random_image(6, 5, 3, rng);
    std::uint8_t prev = 0;
    for (int p = 0; p <= 100; ++p) {
      const auto v = percentile(img, p);
      REQUIRE(v >= prev);
      REQUIRE(std::find(img.data().begin(), img.data().end(), v) != img.data().end());
      prev = v;
    }
    CHECK(prev == *std::max_element(img.data().begin(), img.data().end()));
  }

  TEST_CASE("tensor conversion scales to [0,1]") {
    const Image img(1, 2, 1, std::vector<std::uint8_t>{0, 255});
    const Tensor t = to_tensor(img);
    CHECK(t.shape() == Shape{1, 2, 1});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 1.0);
  }

  TEST_CASE("pnm round trip") {
    Rng rng(4);
    for (std::size_t c : {1u, 3u}) {
      const Image img = random_image(5, 9, c, rng);
      const std::string bytes = encode_pnm(img);
      CHECK(bytes.substr(0, 2) == (c == 1 ? "P5" : "P6"));
      CHECK(decode_pnm(bytes) == img);
      CHECK(encode_pnm(decode_pnm(bytes)) == bytes);
    }
  }

  TEST_CASE("pnm rejects malformed input") {
    CHECK_THROWS(decode_pnm("P5\n2 2\n255\n\x01\x02"));
    CHECK_THROWS(decode_pnm("P2\n1 1\n255\n0"));
    CHECK_THROWS(decode_pnm("P5\n1 1\n65535\n\x01\x02"));
  }

  TEST_CASE("image pair validation") {
    ImagePair ok{Image(4, 4, 3), Image(4, 4, 1), Condition::Day};
    CHECK_NOTHROW(ok.validate());
    ImagePair bad_size{Image(4, 4, 3), Image(4, 5, 1), Condition::Day};
    CHECK_THROWS_AS(bad_size.validate(), std::invalid_argument);
    ImagePair bad_channels{Image(4, 4, 1), Image(4, 4, 1), Condition::Day};
    CHECK_THROWS_AS(bad_channels.validate(), std::invalid_argument);
  }

  TEST_CASE("condition names") {
    CHECK(condition_from_string(to_string(Condition::Night)) == Condition::Night);
    CHECK(condition_from_string("day") == Condition::Day);
    CHECK_THROWS(condition_from_string("dusk"));
  }
}
