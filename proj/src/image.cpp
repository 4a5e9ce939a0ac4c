#include "pinf/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pinf/quality.hpp"

namespace pinf {

RasterImage::RasterImage(std::size_t width, std::size_t height, Rgb fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

RasterImage::RasterImage(std::size_t width, std::size_t height, std::vector<Rgb> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width * height) {
    throw SizeError("pixel buffer length does not match " + std::to_string(width) + "x" +
                    std::to_string(height));
  }
}

namespace {

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

[[noreturn]] void fail(const std::string& what, std::size_t offset) {
  throw DecodeError(what + " (at byte offset " + std::to_string(offset) + ")");
}

double channel(std::uint8_t v) { return static_cast<double>(v) / 255.0; }

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// ---------------------------------------------------------------- PPM

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 24)) fail(std::string("PPM ") + field + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("PPM header: expected ") + field, start);
    return value;
  }

  void expect_single_space() {
    if (pos_ >= bytes_.size()) fail("PPM header ends before pixel data", pos_);
    if (!std::isspace(bytes_[pos_])) fail("PPM header: expected whitespace after maxval", pos_);
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

RasterImage decode_ppm(std::span<const std::uint8_t> bytes) {
  PpmHeaderReader reader(bytes);
  reader.advance(2);
  const std::size_t width = reader.read_uint("width");
  const std::size_t height = reader.read_uint("height");
  const std::size_t maxval_offset = reader.pos();
  const std::size_t maxval = reader.read_uint("maxval");
  reader.expect_single_space();
  if (width == 0 || height == 0) fail("PPM dimensions must be positive", 3);
  if (maxval != 255) {
    fail("unsupported PPM bit depth: maxval " + std::to_string(maxval) + " (only 255)",
         maxval_offset);
  }
  const std::size_t data = reader.pos();
  const std::size_t need = width * height * 3;
  if (bytes.size() - data < need) {
    fail("truncated PPM payload: need " + std::to_string(need) + " bytes, have " +
             std::to_string(bytes.size() - data),
         bytes.size());
  }
  std::vector<Rgb> pixels(width * height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const std::uint8_t* p = bytes.data() + data + 3 * i;
    pixels[i] = {channel(p[0]), channel(p[1]), channel(p[2])};
  }
  return RasterImage(width, height, std::move(pixels));
}

// ---------------------------------------------------------------- PNG

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& compressed,
                                      std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw DecodeError("zlib initialisation failed");
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  inflateEnd(&zs);
  if (rc == Z_DATA_ERROR) throw DecodeError("corrupt PNG image data (zlib stream error)");
  if (produced < expected) {
    throw DecodeError("truncated PNG image data: inflated " + std::to_string(produced) +
                      " of " + std::to_string(expected) + " bytes");
  }
  return out;
}

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  std::size_t pos = kPngSignature.size();
  std::size_t width = 0, height = 0;
  int channels = 0;
  bool have_header = false;
  bool have_end = false;
  std::vector<std::uint8_t> idat;

  while (pos < bytes.size() && !have_end) {
    if (bytes.size() - pos < 12) fail("truncated PNG chunk header", pos);
    const std::uint32_t length = read_be32(bytes.data() + pos);
    const std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    if (length > bytes.size() - pos - 12) fail("truncated PNG chunk '" + type + "'", pos);
    const std::uint8_t* data = bytes.data() + pos + 8;
    const std::uint32_t stored_crc = read_be32(data + length);
    const auto crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), bytes.data() + pos + 4, length + 4));
    if (crc != stored_crc) fail("CRC mismatch in PNG chunk '" + type + "'", pos);

    if (type == "IHDR") {
      if (length != 13) fail("malformed IHDR chunk", pos);
      width = read_be32(data);
      height = read_be32(data + 4);
      const int depth = data[8];
      const int color = data[9];
      if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
        fail("unsupported PNG dimensions", pos + 8);
      }
      if (depth != 8) fail("unsupported PNG bit depth " + std::to_string(depth), pos + 16);
      switch (color) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: fail("unsupported PNG color type " + std::to_string(color), pos + 17);
      }
      if (data[10] != 0 || data[11] != 0) fail("unknown PNG compression/filter method", pos + 18);
      if (data[12] != 0) fail("interlaced PNG is not supported", pos + 20);
      have_header = true;
    } else if (type == "IDAT") {
      if (!have_header) fail("IDAT before IHDR", pos);
      idat.insert(idat.end(), data, data + length);
    } else if (type == "IEND") {
      have_end = true;
    } else if (!have_header) {
      fail("first PNG chunk must be IHDR", pos);
    }
    pos += 12 + length;
  }
  if (!have_header) fail("PNG has no IHDR chunk", pos);
  if (idat.empty()) fail("PNG has no image data", pos);

  const std::size_t stride = width * static_cast<std::size_t>(channels);
  std::vector<std::uint8_t> raw = inflate_all(idat, height * (stride + 1));

  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride);
  std::vector<Rgb> pixels(width * height);
  const std::size_t bpp = static_cast<std::size_t>(channels);
  for (std::size_t y = 0; y < height; ++y) {
    const std::uint8_t* row = raw.data() + y * (stride + 1);
    const int filter = row[0];
    for (std::size_t i = 0; i < stride; ++i) {
      const int x = row[1 + i];
      const int a = i >= bpp ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= bpp ? prev[i - bpp] : 0;
      int v;
      switch (filter) {
        case 0: v = x; break;
        case 1: v = x + a; break;
        case 2: v = x + b; break;
        case 3: v = x + (a + b) / 2; break;
        case 4: v = x + paeth(a, b, c); break;
        default: throw DecodeError("invalid PNG filter type " + std::to_string(filter) +
                                   " on row " + std::to_string(y));
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xFF);
    }
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint8_t* p = cur.data() + x * bpp;
      Rgb& out = pixels[y * width + x];
      if (channels <= 2) {
        out = {channel(p[0]), channel(p[0]), channel(p[0])};
      } else {
        out = {channel(p[0]), channel(p[1]), channel(p[2])};
      }
    }
    std::swap(prev, cur);
  }
  return RasterImage(width, height, std::move(pixels));
}

void append_chunk(std::vector<std::uint8_t>& out, const char* type,
                  const std::vector<std::uint8_t>& data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(crc32(0L, Z_NULL, 0), out.data() + type_pos,
                         static_cast<uInt>(data.size() + 4));
  append_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string sniff_media_type(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= kPngSignature.size() &&
      std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin())) {
    return "image/png";
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return "image/x-portable-pixmap";
  return {};
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
  const std::string type = sniff_media_type(bytes);
  if (type == "image/png") return decode_png(bytes);
  if (type == "image/x-portable-pixmap") return decode_ppm(bytes);
  fail("unrecognized image format (expected binary PPM or PNG)", 0);
}

std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels().size() * 3);
  for (const Rgb& p : img.pixels()) {
    out.push_back(quantize(p.r));
    out.push_back(quantize(p.g));
    out.push_back(quantize(p.b));
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());
  std::vector<std::uint8_t> ihdr;
  append_be32(ihdr, static_cast<std::uint32_t>(img.width()));
  append_be32(ihdr, static_cast<std::uint32_t>(img.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  append_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(img.height() * (img.width() * 3 + 1));
  for (std::size_t y = 0; y < img.height(); ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < img.width(); ++x) {
      const Rgb& p = img.at(x, y);
      raw.insert(raw.end(), {quantize(p.r), quantize(p.g), quantize(p.b)});
    }
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(size);
  if (compress2(compressed.data(), &size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error("zlib compression failed");
  }
  compressed.resize(size);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace pinf
