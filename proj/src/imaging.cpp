#include "iaf/imaging.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "iaf/fileutil.hpp"

namespace iaf {

Image::Image(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill)
    : Image(height, width, channels, std::vector<std::uint8_t>(height * width * channels, fill)) {}

Image::Image(std::size_t height, std::size_t width, std::size_t channels,
             std::vector<std::uint8_t> data)
    : h_(height), w_(width), c_(channels), data_(std::move(data)) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("Image: channels must be 1 or 3");
  if (height == 0 || width == 0) throw std::invalid_argument("Image: empty extent");
  if (data_.size() != height * width * channels) {
    throw std::invalid_argument("Image: data length does not match H*W*C");
  }
}

std::string to_string(Condition c) {
  switch (c) {
    case Condition::Day: return "day";
    case Condition::Night: return "night";
    case Condition::Unknown: return "unknown";
  }
  return "unknown";
}

Condition condition_from_string(const std::string& s) {
  if (s == "day") return Condition::Day;
  if (s == "night") return Condition::Night;
  if (s == "unknown") return Condition::Unknown;
  throw std::invalid_argument("unknown condition '" + s + "' (expected day, night or unknown)");
}

void ImagePair::validate() const {
  if (color.channels() != 3) throw std::invalid_argument("ImagePair: color image must have 3 channels");
  if (thermal.channels() != 1) throw std::invalid_argument("ImagePair: thermal image must have 1 channel");
  if (color.height() != thermal.height() || color.width() != thermal.width()) {
    throw std::invalid_argument("ImagePair: color and thermal sizes differ");
  }
}

Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: output size must be >= 1");
  if (out_h == img.height() && out_w == img.width()) return img;
  const std::size_t c = img.channels();
  Image out(out_h, out_w, c);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(out_w);
  const double max_y = static_cast<double>(img.height() - 1);
  const double max_x = static_cast<double>(img.width() - 1);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double top = (1.0 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
        const double bot = (1.0 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
        const double v = (1.0 - wy) * top + wy * bot;
        out.at(oy, ox, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

double mean_pixel(const Image& img) {
  if (img.empty()) throw std::invalid_argument("mean_pixel: empty image");
  std::uint64_t sum = 0;
  for (std::uint8_t v : img.data()) sum += v;
  return static_cast<double>(sum) / static_cast<double>(img.data().size()) / 255.0;
}

std::uint8_t percentile(const Image& img, double p) {
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p must lie in [0,100]");
  if (img.empty()) throw std::invalid_argument("percentile: empty image");
  std::array<std::size_t, 256> hist{};
  for (std::uint8_t v : img.data()) ++hist[v];
  const std::size_t n = img.data().size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::size_t cum = 0;
  for (std::size_t v = 0; v < 256; ++v) {
    cum += hist[v];
    if (cum >= rank) return static_cast<std::uint8_t>(v);
  }
  return 255;
}

Tensor to_tensor(const Image& img) {
  Tensor t({img.height(), img.width(), img.channels()});
  for (std::size_t i = 0; i < img.data().size(); ++i) t[i] = img.data()[i] / 255.0;
  return t;
}

std::string encode_pnm(const Image& img) {
  std::string out = img.channels() == 1 ? "P5\n" : "P6\n";
  out += std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data().data()), img.data().size());
  return out;
}

namespace {

class PnmHeader {
 public:
  PnmHeader(const std::string& bytes, const std::string& source) : b_(bytes), src_(source) {}

  std::string token() {
    skip_ws_and_comments();
    std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(src_ + ": truncated PNM header");
    return b_.substr(start, pos_ - start);
  }

  std::size_t number() {
    const std::string t = token();
    try {
      const long long v = parse_int(t);
      if (v <= 0) throw std::invalid_argument("non-positive");
      return static_cast<std::size_t>(v);
    } catch (const std::invalid_argument&) {
      throw ParseError(src_ + ": bad PNM header field '" + t + "'");
    }
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw ParseError(src_ + ": missing separator before PNM raster");
    }
    return pos_ + 1;
  }

 private:
  void skip_ws_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  const std::string& src_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(const std::string& bytes, const std::string& source) {
  PnmHeader hdr(bytes, source);
  const std::string magic = hdr.token();
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw ParseError(source + ": unsupported PNM magic '" + magic + "' (expected P5 or P6)");
  }
  const std::size_t w = hdr.number();
  const std::size_t h = hdr.number();
  const std::size_t maxval = hdr.number();
  if (maxval != 255) throw ParseError(source + ": only maxval 255 is supported");
  const std::size_t start = hdr.raster_start();
  const std::size_t n = w * h * channels;
  if (bytes.size() - start != n) {
    throw ParseError(source + ": raster has " + std::to_string(bytes.size() - start) +
                     " bytes, expected " + std::to_string(n));
  }
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
  return Image(h, w, channels, std::move(data));
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  write_file_atomic(path, encode_pnm(img));
}

Image read_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path), path.string()); }

}  // namespace iaf
