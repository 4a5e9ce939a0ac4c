#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pinf {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major RGB image, channels in [0, 1].
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(std::size_t width, std::size_t height, Rgb fill = {});
  RasterImage(std::size_t width, std::size_t height, std::vector<Rgb> pixels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  Rgb& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }

  std::span<Rgb> pixels() { return pixels_; }
  std::span<const Rgb> pixels() const { return pixels_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<Rgb> pixels_;
};

/// Single-channel plane of reals, row-major.
struct GrayPlane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

/// Decodes binary PPM (P6, maxval 255) or 8-bit PNG. PNG grayscale is
/// replicated to RGB and alpha is dropped. Throws DecodeError naming the
/// cause and, where meaningful, the byte offset.
RasterImage decode_image(std::span<const std::uint8_t> bytes);

/// "image/png", "image/x-portable-pixmap" or empty when the magic is unknown.
std::string sniff_media_type(std::span<const std::uint8_t> bytes);

/// Channels are quantized with round-to-nearest after clamping to [0, 1].
std::vector<std::uint8_t> encode_ppm(const RasterImage& img);
std::vector<std::uint8_t> encode_png(const RasterImage& img);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace pinf
