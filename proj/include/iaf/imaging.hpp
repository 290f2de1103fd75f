#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iaf/tensor.hpp"

namespace iaf {

/// 8-bit image, row-major, channel-interleaved; 1 (thermal) or 3 (color) channels.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, std::uint8_t fill = 0);
  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<std::uint8_t> data);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t channels() const { return c_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * w_ + x) * c_ + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * w_ + x) * c_ + c];
  }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t h_ = 0, w_ = 0, c_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class Condition { Day, Night, Unknown };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

/// Spatially aligned color (3-channel) and thermal (1-channel) frames.
struct ImagePair {
  Image color;
  Image thermal;
  Condition condition = Condition::Unknown;

  /// Throws std::invalid_argument unless channel counts and sizes agree.
  void validate() const;
};

/// Bilinear resize with half-pixel centers; results rounded to nearest.
Image resize_bilinear(const Image& img, std::size_t out_h, std::size_t out_w);

/// Mean over all samples of all channels, divided by 255.
double mean_pixel(const Image& img);

/// Nearest-rank percentile over all samples: rank ceil(p/100 * N), p = 0 -> rank 1.
std::uint8_t percentile(const Image& img, double p);

/// Samples scaled to [0,1] as an H x W x C tensor.
Tensor to_tensor(const Image& img);

/// Binary PGM (P5) for 1 channel, PPM (P6) for 3 channels; maxval 255.
std::string encode_pnm(const Image& img);
Image decode_pnm(const std::string& bytes, const std::string& source = "<memory>");
void write_pnm(const std::filesystem::path& path, const Image& img);
Image read_pnm(const std::filesystem::path& path);

}  // namespace iaf
