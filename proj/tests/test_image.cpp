#include <doctest.h>
#include <zlib.h>

#include <cstdlib>
#include <string>

#include "pinf/image.hpp"
#include "pinf/quality.hpp"
#include "pinf/rng.hpp"

using namespace pinf;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, static_cast<std::uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size()))));
}

int paeth_predictor(int a, int b, int c) {
  const int p = a + b - c, pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

// Hand-built PNG with every row encoded by the given filter type, so the
// decoder's unfiltering is checked against forward filtering.
std::vector<std::uint8_t> make_png(std::uint32_t w, std::uint32_t h, std::uint8_t color_type,
                                   const std::vector<std::uint8_t>& raw, std::uint8_t filter) {
  const std::size_t bpp = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
  const std::size_t stride = w * bpp;
  std::vector<std::uint8_t> filtered;
  for (std::size_t y = 0; y < h; ++y) {
    filtered.push_back(filter);
    for (std::size_t i = 0; i < stride; ++i) {
      const int x = raw[y * stride + i];
      const int a = i >= bpp ? raw[y * stride + i - bpp] : 0;
      const int b = y > 0 ? raw[(y - 1) * stride + i] : 0;
      const int c = (i >= bpp && y > 0) ? raw[(y - 1) * stride + i - bpp] : 0;
      int pred = 0;
      switch (filter) {
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = paeth_predictor(a, b, c); break;
        default: pred = 0;
      }
      filtered.push_back(static_cast<std::uint8_t>((x - pred) & 0xff));
    }
  }
  uLongf len = compressBound(static_cast<uLong>(filtered.size()));
  std::vector<std::uint8_t> z(len);
  REQUIRE(compress(z.data(), &len, filtered.data(), static_cast<uLong>(filtered.size())) == Z_OK);
  z.resize(len);

  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, w);
  put_be32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, color_type, 0, 0, 0});
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});
  return png;
}

}  // namespace

TEST_SUITE("image") {
  TEST_CASE("P6 1x1 black pixel") {
    auto bytes = bytes_of("P6\n1 1\n255\n");
    bytes.insert(bytes.end(), {0, 0, 0});
    const RasterImage img = decode_image(bytes);
    CHECK(img.width() == 1);
    CHECK(img.height() == 1);
    CHECK(img.at(0, 0) == Rgb{0, 0, 0});
  }

  TEST_CASE("P6 header comments and channel scaling") {
    auto bytes = bytes_of("P6 # a comment\n2 # width done\n1\n255\n");
    bytes.insert(bytes.end(), {255, 0, 51, 0, 255, 102});
    const RasterImage img = decode_image(bytes);
    CHECK(img.at(0, 0) == Rgb{1.0, 0.0, 0.2});
    CHECK(img.at(1, 0) == Rgb{0.0, 1.0, 0.4});
  }

  TEST_CASE("P6 truncated payload names the shortfall") {
    auto bytes = bytes_of("P6\n2 2\n255\n");
    bytes.insert(bytes.end(), 9, 7);
    try {
      decode_image(bytes);
      FAIL("expected a decode error");
    } catch (const DecodeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("truncated") != std::string::npos);
      CHECK(msg.find("need 12") != std::string::npos);
      CHECK(msg.find("have 9") != std::string::npos);
    }
  }

  TEST_CASE("P6 with 16-bit maxval is rejected") {
    auto bytes = bytes_of("P6\n1 1\n65535\n");
    bytes.insert(bytes.end(), 6, 0);
    CHECK_THROWS_AS(decode_image(bytes), DecodeError);
  }

  TEST_CASE("malformed inputs raise decode errors") {
    CHECK_THROWS_AS(decode_image(bytes_of("")), DecodeError);
    CHECK_THROWS_AS(decode_image(bytes_of("GIF89a")), DecodeError);
    CHECK_THROWS_AS(decode_image(bytes_of("P6\nx 1\n255\n")), DecodeError);
    CHECK_THROWS_AS(decode_image(bytes_of("P6\n0 1\n255\n")), DecodeError);
    CHECK_THROWS_AS(decode_image(bytes_of("P3\n1 1\n255\n0 0 0")), DecodeError);
  }

  TEST_CASE("random bytes never crash the decoder") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<std::uint8_t> junk(rng.uniform_int(0, 200));
      for (auto& b : junk) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      if (trial % 3 == 0 && junk.size() >= 8) {
        const std::uint8_t sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
        std::copy(std::begin(sig), std::end(sig), junk.begin());
      }
      if (trial % 3 == 1 && junk.size() >= 2) {
        junk[0] = 'P';
        junk[1] = '6';
      }
      try {
        decode_image(junk);
      } catch (const DecodeError&) {
      }
    }
  }

  TEST_CASE("PNG 2x2 opaque white") {
    const std::vector<std::uint8_t> raw(2 * 2 * 3, 255);
    const RasterImage img = decode_image(make_png(2, 2, 2, raw, 0));
    CHECK(img.width() == 2);
    CHECK(img.height() == 2);
    for (const Rgb& p : img.pixels()) CHECK(p == Rgb{1, 1, 1});
  }

  TEST_CASE("PNG filters 0-4 all decode to the same pixels") {
    Rng rng(3);
    const std::uint32_t w = 5, h = 4;
    std::vector<std::uint8_t> raw(w * h * 3);
    for (auto& b : raw) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    for (std::uint8_t f = 0; f <= 4; ++f) {
      CAPTURE(static_cast<int>(f));
      const RasterImage img = decode_image(make_png(w, h, 2, raw, f));
      for (std::uint32_t y = 0; y < h; ++y) {
        for (std::uint32_t x = 0; x < w; ++x) {
          const std::size_t i = (y * w + x) * 3;
          CHECK(img.at(x, y) == Rgb{raw[i] / 255.0, raw[i + 1] / 255.0, raw[i + 2] / 255.0});
        }
      }
    }
  }

  TEST_CASE("PNG grayscale is replicated and alpha dropped") {
    const RasterImage gray = decode_image(make_png(2, 1, 0, {0, 255}, 0));
    CHECK(gray.at(0, 0) == Rgb{0, 0, 0});
    CHECK(gray.at(1, 0) == Rgb{1, 1, 1});
    const RasterImage ga = decode_image(make_png(1, 1, 4, {102, 0}, 1));
    CHECK(ga.at(0, 0) == Rgb{0.4, 0.4, 0.4});
    const RasterImage rgba = decode_image(make_png(1, 1, 6, {255, 0, 0, 7}, 2));
    CHECK(rgba.at(0, 0) == Rgb{1, 0, 0});
  }

  TEST_CASE("PNG with a corrupted CRC is rejected") {
    auto png = make_png(1, 1, 2, {1, 2, 3}, 0);
    png[29] ^= 0xff;  // inside the IHDR CRC
    CHECK_THROWS_AS(decode_image(png), DecodeError);
  }

  TEST_CASE("PNG 16-bit depth is rejected") {
    auto png = make_png(1, 1, 2, {1, 2, 3}, 0);
    png[24] = 16;
    // Recompute the IHDR CRC so only the depth is wrong.
    const uLong crc = crc32(0, png.data() + 12, 17);
    for (int i = 0; i < 4; ++i) png[29 + i] = static_cast<std::uint8_t>(crc >> (24 - 8 * i));
    try {
      decode_image(png);
      FAIL("expected a decode error");
    } catch (const DecodeError& e) {
      CHECK(std::string(e.what()).find("depth") != std::string::npos);
    }
  }

  TEST_CASE("encoders round trip through the decoder") {
    Rng rng(5);
    std::vector<Rgb> px(7 * 3);
    for (auto& p : px) {
      p = {rng.uniform_int(0, 255) / 255.0, rng.uniform_int(0, 255) / 255.0, rng.uniform_int(0, 255) / 255.0};
    }
    const RasterImage img(7, 3, px);
    CHECK(decode_image(encode_ppm(img)) == img);
    CHECK(decode_image(encode_png(img)) == img);
    CHECK(sniff_media_type(encode_png(img)) == "image/png");
    CHECK(sniff_media_type(encode_ppm(img)) == "image/x-portable-pixmap");
    CHECK(sniff_media_type(bytes_of("hello")).empty());
  }
}
