#include "pinf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pinf/rng.hpp"

namespace pinf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unspecified: break;
  }
  return "unspecified";
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return Split::Unspecified;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text << '\n';
  if (!out) throw Error("write failed for " + path);
}

SeverityLabel parse_label(const json& v, const std::string& image_id, const std::string& key) {
  if (!v.is_number_integer()) {
    throw SchemaError("image " + image_id + ": label '" + key + "' must be an integer 0..5");
  }
  const auto value = v.get<long long>();
  if (value < 0 || value > 5) {
    throw SchemaError("image " + image_id + ": label '" + key + "' = " + std::to_string(value) +
                      " is outside 0..5");
  }
  return SeverityLabel(static_cast<int>(value));
}

}  // namespace

std::string AnnotatedCorpus::image_path(const CorpusEntry& e) const {
  return (fs::path(root) / e.file).string();
}

AnnotatedCorpus parse_annotations(const std::string& text, const std::string& root,
                                  std::vector<std::string>* notices) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.at("version").is_number_integer()) {
    throw SchemaError("annotation file: missing integer 'version'");
  }
  if (doc.at("version").get<int>() != kAnnotationFormatVersion) {
    throw SchemaError("annotation file: unsupported version " + doc.at("version").dump());
  }
  if (!doc.contains("images") || !doc.at("images").is_array()) {
    throw SchemaError("annotation file: missing 'images' array");
  }
  AnnotatedCorpus corpus;
  corpus.root = root;
  corpus.split = parse_split(doc.value("split", std::string{}));
  corpus.seed = doc.value("seed", std::uint64_t{0});

  std::set<std::string> ids;
  for (const json& item : doc.at("images")) {
    if (!item.is_object() || !item.contains("id") || !item.at("id").is_string()) {
      throw SchemaError("annotation file: every image needs a string 'id'");
    }
    CorpusEntry entry;
    QualityAnnotation& ann = entry.annotation;
    ann.image_id = item.at("id").get<std::string>();
    if (!ids.insert(ann.image_id).second) throw SchemaError("duplicate image_id " + ann.image_id);
    entry.file = item.value("file", std::string{});
    if (!item.contains("unrecognizable")) {
      throw SchemaError("image " + ann.image_id + ": missing 'unrecognizable'");
    }
    ann.unrecognizable = parse_label(item.at("unrecognizable"), ann.image_id, "unrecognizable");
    if (!item.contains("flaws") || !item.at("flaws").is_object()) {
      throw SchemaError("image " + ann.image_id + ": missing 'flaws' object");
    }
    std::array<bool, kFlawCount> present{};
    for (const auto& [key, value] : item.at("flaws").items()) {
      if (key == "others" || key == "none") {
        if (notices) notices->push_back("image " + ann.image_id + ": dropped '" + key + "' label");
        continue;
      }
      const auto kind = parse_flaw(key);
      if (!kind) throw SchemaError("image " + ann.image_id + ": unknown flaw key '" + key + "'");
      ann.flaws[*kind] = parse_label(value, ann.image_id, key);
      present[flaw_index(*kind)] = true;
    }
    for (FlawKind k : kAllFlaws) {
      if (!present[flaw_index(k)]) {
        throw SchemaError("image " + ann.image_id + ": missing flaw key '" + std::string(flaw_name(k)) + "'");
      }
    }
    if (item.contains("captions")) {
      if (!item.at("captions").is_array()) throw SchemaError("image " + ann.image_id + ": 'captions' must be an array");
      for (const json& c : item.at("captions")) {
        if (!c.is_string()) throw SchemaError("image " + ann.image_id + ": captions must be strings");
        ann.captions.push_back(c.get<std::string>());
      }
    }
    corpus.entries.push_back(std::move(entry));
  }
  return corpus;
}

AnnotatedCorpus load_annotations(const std::string& path, std::vector<std::string>* notices) {
  const std::string root = fs::path(path).parent_path().string();
  return parse_annotations(read_text(path), root.empty() ? "." : root, notices);
}

std::string annotations_to_json(const AnnotatedCorpus& corpus) {
  json images = json::array();
  for (const CorpusEntry& e : corpus.entries) {
    json flaws = json::object();
    for (FlawKind k : kAllFlaws) flaws[std::string(flaw_name(k))] = e.annotation.flaws[k].value();
    images.push_back({{"id", e.annotation.image_id},
                      {"file", e.file},
                      {"unrecognizable", e.annotation.unrecognizable.value()},
                      {"flaws", flaws},
                      {"captions", e.annotation.captions}});
  }
  json doc;
  doc["version"] = kAnnotationFormatVersion;
  doc["split"] = std::string(split_name(corpus.split));
  doc["seed"] = corpus.seed;
  doc["images"] = std::move(images);
  return doc.dump(1);
}

void save_annotations(const AnnotatedCorpus& corpus, const std::string& path) {
  write_text(path, annotations_to_json(corpus));
}

ValidationSplit split_validation(const AnnotatedCorpus& corpus, std::uint64_t seed) {
  const std::size_t n = corpus.entries.size();
  if (n < 2) throw Error("split_validation needs at least two images");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_val = (n + 1) / 2;

  ValidationSplit out;
  out.val.root = out.test.root = corpus.root;
  out.val.seed = out.test.seed = seed;
  out.val.split = Split::Val;
  out.test.split = Split::Test;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_val ? out.val : out.test).entries.push_back(corpus.entries[order[i]]);
  }
  return out;
}

// ---------------------------------------------------------------- degradation

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * static_cast<std::size_t>(radius) + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const auto width = static_cast<int>(img.width());
  const auto height = static_cast<int>(img.height());
  auto clamp_to = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };

  RasterImage tmp(img.width(), img.height());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Rgb acc;
      for (int k = -radius; k <= radius; ++k) {
        const Rgb& p = img.at(static_cast<std::size_t>(clamp_to(x + k, width)), static_cast<std::size_t>(y));
        const double w = kernel[static_cast<std::size_t>(k + radius)];
        acc.r += w * p.r;
        acc.g += w * p.g;
        acc.b += w * p.b;
      }
      tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Rgb acc;
      for (int k = -radius; k <= radius; ++k) {
        const Rgb& p = tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(clamp_to(y + k, height)));
        const double w = kernel[static_cast<std::size_t>(k + radius)];
        acc.r += w * p.r;
        acc.g += w * p.g;
        acc.b += w * p.b;
      }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  return out;
}

namespace {

Rgb bilinear(const RasterImage& img, double fx, double fy) {
  const double max_x = static_cast<double>(img.width() - 1);
  const double max_y = static_cast<double>(img.height() - 1);
  fx = std::clamp(fx, 0.0, max_x);
  fy = std::clamp(fy, 0.0, max_y);
  const auto x0 = static_cast<std::size_t>(std::floor(fx));
  const auto y0 = static_cast<std::size_t>(std::floor(fy));
  const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
  const double tx = fx - static_cast<double>(x0);
  const double ty = fy - static_cast<double>(y0);
  auto mix = [&](double a, double b, double c, double d) {
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  };
  const Rgb &p00 = img.at(x0, y0), &p10 = img.at(x1, y0), &p01 = img.at(x0, y1), &p11 = img.at(x1, y1);
  return {mix(p00.r, p10.r, p01.r, p11.r), mix(p00.g, p10.g, p01.g, p11.g),
          mix(p00.b, p10.b, p01.b, p11.b)};
}

// Horizontal pan: the content slides sideways by `fraction` x 0.6 x width and
// the uncovered side repeats the edge column.
RasterImage framing_shift(const RasterImage& img, double fraction, bool to_left) {
  const auto shift = static_cast<long>(std::lround(fraction * 0.6 * static_cast<double>(img.width())));
  RasterImage out(img.width(), img.height());
  const long w = static_cast<long>(img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (long x = 0; x < w; ++x) {
      const long src = std::clamp(to_left ? x + shift : x - shift, 0L, w - 1);
      out.at(static_cast<std::size_t>(x), y) = img.at(static_cast<std::size_t>(src), y);
    }
  }
  return out;
}

RasterImage rotate(const RasterImage& img, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
  RasterImage out(img.width(), img.height());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      // Inverse mapping: sample the source at R(-angle) * (p - c) + c.
      out.at(x, y) = bilinear(img, c * dx + s * dy + cx, -s * dx + c * dy + cy);
    }
  }
  return out;
}

constexpr std::array<Rgb, 2> kOccluderColors = {Rgb{0.87, 0.68, 0.58}, Rgb{0.52, 0.36, 0.28}};

}  // namespace

RasterImage degrade_image(const RasterImage& img, const DegradationSpec& spec) {
  Rng rng(spec.seed);
  const bool shift_left = rng.uniform_int(0, 1) == 1;
  const auto occluder_side = rng.uniform_int(0, 3);
  const Rgb occluder = kOccluderColors[static_cast<std::size_t>(rng.uniform_int(0, 1))];

  const auto sev = [&](FlawKind k) { return static_cast<std::size_t>(spec.severity[k].value()); };
  RasterImage out = img;
  if (sev(FlawKind::Framing) > 0) {
    out = framing_shift(out, DegradeTable::framing_shift[sev(FlawKind::Framing)], shift_left);
  }
  if (sev(FlawKind::Rotation) > 0) out = rotate(out, DegradeTable::rotation_deg[sev(FlawKind::Rotation)]);
  if (sev(FlawKind::Blur) > 0) out = gaussian_blur(out, DegradeTable::blur_sigma[sev(FlawKind::Blur)]);
  if (sev(FlawKind::Dark) > 0) {
    const double g = DegradeTable::dark_gain[sev(FlawKind::Dark)];
    for (Rgb& p : out.pixels()) p = {p.r * g, p.g * g, p.b * g};
  }
  if (sev(FlawKind::Bright) > 0) {
    const double w = DegradeTable::bright_weight[sev(FlawKind::Bright)];
    for (Rgb& p : out.pixels()) p = {p.r * (1 - w) + w, p.g * (1 - w) + w, p.b * (1 - w) + w};
  }
  if (sev(FlawKind::Obscured) > 0) {
    // A flat band entering from one side, covering the tabled area fraction.
    const double area = DegradeTable::occluder_area[sev(FlawKind::Obscured)];
    const bool vertical_band = occluder_side < 2;
    const std::size_t extent = vertical_band ? out.width() : out.height();
    const auto thickness = static_cast<std::size_t>(std::lround(area * static_cast<double>(extent)));
    for (std::size_t y = 0; y < out.height(); ++y) {
      for (std::size_t x = 0; x < out.width(); ++x) {
        bool covered = false;
        switch (occluder_side) {
          case 0: covered = x < thickness; break;
          case 1: covered = x >= out.width() - thickness; break;
          case 2: covered = y < thickness; break;
          default: covered = y >= out.height() - thickness; break;
        }
        if (covered) out.at(x, y) = occluder;
      }
    }
  }
  return out;
}

SeverityLabel unrecognizable_from_flaws(const FlawMap<SeverityLabel>& severity) {
  const auto& v = severity.values();
  const auto max_it = std::max_element(v.begin(), v.end(),
                                       [](SeverityLabel a, SeverityLabel b) { return a.value() < b.value(); });
  double others = 0.0;
  for (auto it = v.begin(); it != v.end(); ++it)
    if (it != max_it) others += it->value();
  const double u = 0.8 * max_it->value() + 0.4 * (others / static_cast<double>(kFlawCount - 1));
  return SeverityLabel(static_cast<int>(std::clamp(std::round(u), 0.0, 5.0)));
}

// ---------------------------------------------------------------- scenes

namespace {

struct NamedColor {
  const char* name;
  Rgb rgb;
};

constexpr std::array<NamedColor, 8> kShapeColors = {{
    {"red", {0.85, 0.15, 0.15}},
    {"green", {0.2, 0.68, 0.25}},
    {"blue", {0.18, 0.3, 0.85}},
    {"yellow", {0.95, 0.85, 0.2}},
    {"orange", {0.95, 0.55, 0.1}},
    {"purple", {0.55, 0.25, 0.7}},
    {"white", {0.96, 0.96, 0.96}},
    {"black", {0.08, 0.08, 0.08}},
}};

constexpr std::array<NamedColor, 4> kBackgrounds = {{
    {"gray", {0.74, 0.74, 0.74}},
    {"beige", {0.86, 0.8, 0.66}},
    {"light blue", {0.66, 0.8, 0.94}},
    {"pink", {0.92, 0.74, 0.78}},
}};

constexpr std::array<NamedColor, 3> kFloors = {{
    {"wooden", {0.46, 0.31, 0.18}},
    {"dark", {0.22, 0.22, 0.26}},
    {"green", {0.24, 0.42, 0.22}},
}};

constexpr std::array<const char*, 4> kShapes = {"circle", "square", "triangle", "diamond"};

constexpr double kNoiseAmplitude = 0.04;

struct Shape {
  std::size_t kind;
  double cx, cy, radius;
  Rgb color;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
      case 0: return dx * dx + dy * dy <= radius * radius;
      case 1: return std::abs(dx) <= radius && std::abs(dy) <= radius;
      case 2: {
        // Upright isosceles triangle inside the bounding square.
        if (dy < -radius || dy > radius) return false;
        const double half_width = radius * (dy + radius) / (2.0 * radius);
        return std::abs(dx) <= half_width;
      }
      default: return std::abs(dx) + std::abs(dy) <= radius;
    }
  }
};

}  // namespace

Scene render_scene(std::uint64_t seed) {
  Rng rng(seed);
  const auto& bg = kBackgrounds[static_cast<std::size_t>(rng.uniform_int(0, kBackgrounds.size() - 1))];
  const auto& floor = kFloors[static_cast<std::size_t>(rng.uniform_int(0, kFloors.size() - 1))];
  const double floor_y = kSceneSize * rng.uniform(0.72, 0.8);

  Shape main;
  main.kind = static_cast<std::size_t>(rng.uniform_int(0, kShapes.size() - 1));
  const auto main_color = static_cast<std::size_t>(rng.uniform_int(0, kShapeColors.size() - 1));
  main.color = kShapeColors[main_color].rgb;
  main.radius = rng.uniform(20.0, 28.0);
  main.cx = kSceneSize / 2.0 + rng.uniform(-6.0, 6.0);
  main.cy = kSceneSize / 2.0 + rng.uniform(-6.0, 4.0);

  std::vector<Shape> shapes{main};
  const auto extra = static_cast<std::size_t>(rng.uniform_int(0, 2));
  std::size_t second_color = main_color;
  std::size_t second_kind = main.kind;
  for (std::size_t i = 0; i < extra; ++i) {
    Shape s;
    s.kind = static_cast<std::size_t>(rng.uniform_int(0, kShapes.size() - 1));
    auto color = static_cast<std::size_t>(rng.uniform_int(0, kShapeColors.size() - 2));
    if (color >= main_color) ++color;  // never the main colour
    s.color = kShapeColors[color].rgb;
    s.radius = rng.uniform(7.0, 11.0);
    s.cx = (i == 0 ? 24.0 : kSceneSize - 24.0) + rng.uniform(-4.0, 4.0);
    s.cy = floor_y - s.radius - rng.uniform(0.0, 6.0);
    if (i == 0) {
      second_color = color;
      second_kind = s.kind;
    }
    shapes.push_back(s);
  }

  // 14x14 checker label with 2 px cells on the main shape.
  const double label_x0 = std::round(main.cx) - 7.0;
  const double label_y0 = std::round(main.cy) - 7.0;

  RasterImage img(kSceneSize, kSceneSize);
  for (std::size_t y = 0; y < kSceneSize; ++y) {
    for (std::size_t x = 0; x < kSceneSize; ++x) {
      const double fx = static_cast<double>(x) + 0.5;
      const double fy = static_cast<double>(y) + 0.5;
      Rgb p;
      if (fy < floor_y) {
        const double shade = 1.0 - 0.3 * fy / floor_y;
        p = {bg.rgb.r * shade, bg.rgb.g * shade, bg.rgb.b * shade};
      } else {
        const double shade = 1.0 - 0.25 * (fy - floor_y) / (kSceneSize - floor_y);
        p = {floor.rgb.r * shade, floor.rgb.g * shade, floor.rgb.b * shade};
      }
      for (const Shape& s : shapes)
        if (s.contains(fx, fy)) p = s.color;
      if (fx >= label_x0 && fx < label_x0 + 14.0 && fy >= label_y0 && fy < label_y0 + 14.0) {
        const auto cell = static_cast<long>((fx - label_x0) / 2.0) + static_cast<long>((fy - label_y0) / 2.0);
        const double v = cell % 2 == 0 ? 0.92 : 0.1;
        p = {v, v, v};
      }
      const double n = rng.uniform(-kNoiseAmplitude, kNoiseAmplitude);
      img.at(x, y) = {std::clamp(p.r + n, 0.0, 1.0), std::clamp(p.g + n, 0.0, 1.0),
                      std::clamp(p.b + n, 0.0, 1.0)};
    }
  }

  const std::string color = kShapeColors[main_color].name;
  const std::string shape = kShapes[main.kind];
  const std::string size = main.radius >= 24.0 ? "large" : "small";
  const std::string bg_name = bg.name;
  const std::string floor_name = floor.name;

  Scene scene;
  scene.image = std::move(img);
  scene.color_word = color;
  scene.references = {
      "a " + color + " " + shape + " in the middle of the picture",
      "a " + size + " " + color + " " + shape + " in front of a " + bg_name + " wall",
      "a " + color + " " + shape + " with a black and white checkered label",
      extra > 0 ? "a " + color + " " + shape + " next to a small " +
                      std::string(kShapeColors[second_color].name) + " " + kShapes[second_kind]
                : "a " + color + " " + shape + " above a " + floor_name + " floor",
      "the photo shows a " + shape + " that is " + color,
  };
  scene.held_out_caption = "a " + color + " " + shape + " in front of a " + bg_name + " wall above a " +
                           floor_name + " floor";
  return scene;
}

// ---------------------------------------------------------------- catalog

std::string catalog_to_json(const CaptionCatalog& catalog) {
  json doc = json::object();
  for (const auto& [id, entry] : catalog) doc[id] = {{"clean", entry.clean}, {"degraded", entry.degraded}};
  return doc.dump(1);
}

void save_catalog(const CaptionCatalog& catalog, const std::string& path) {
  write_text(path, catalog_to_json(catalog));
}

CaptionCatalog load_catalog(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw SchemaError("catalog " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SchemaError("catalog must be a JSON object");
  CaptionCatalog catalog;
  for (const auto& [id, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("clean") || !entry.contains("degraded")) {
      throw SchemaError("catalog entry " + id + " needs 'clean' and 'degraded'");
    }
    catalog[id] = {entry.at("clean").get<std::string>(), entry.at("degraded").get<std::string>()};
  }
  return catalog;
}

// ---------------------------------------------------------------- generation

namespace {

std::string degraded_caption_for(const FlawMap<SeverityLabel>& severity) {
  static constexpr std::array<const char*, kFlawCount> captions = {
      "a picture of a blank wall",      // framing
      "a blurry image",                 // blur
      "a black screen",                 // dark
      "a white and bright image",       // bright
      "a finger covering the camera",   // obscured
      "a sideways photo of something",  // rotation
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < kFlawCount; ++i)
    if (severity.values()[i].value() > severity.values()[best].value()) best = i;
  return captions[best];
}

}  // namespace

GeneratedCorpus generate_corpus(std::size_t count, std::uint64_t seed, const std::string& out_dir) {
  if (count < 1) throw Error("corpus count must be at least 1");
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());

  std::vector<CorpusEntry> entries;
  CaptionCatalog catalog;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t sample_seed = derive_seed(seed, i);
    Rng rng(derive_seed(sample_seed, 0));
    DegradationSpec spec;
    for (FlawKind k : kAllFlaws) {
      const bool flawed = rng.uniform() >= 0.7;
      spec.severity[k] = SeverityLabel(flawed ? static_cast<int>(rng.uniform_int(1, 5)) : 0);
    }
    spec.seed = derive_seed(sample_seed, 1);
    const Scene scene = render_scene(derive_seed(sample_seed, 2));
    const RasterImage degraded = degrade_image(scene.image, spec);

    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "img_%05zu", i);
    const std::string id = id_buf;
    CorpusEntry entry;
    entry.file = "images/" + id + ".ppm";
    entry.annotation.image_id = id;
    entry.annotation.flaws = spec.severity;
    entry.annotation.unrecognizable = unrecognizable_from_flaws(spec.severity);
    entry.annotation.captions = scene.references;
    write_file_bytes((fs::path(out_dir) / entry.file).string(), encode_ppm(degraded));
    catalog[id] = {scene.held_out_caption, degraded_caption_for(spec.severity)};
    entries.push_back(std::move(entry));
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(seed, count + 1));
  split_rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::lround(kTrainFraction * static_cast<double>(count)));
  std::vector<bool> is_train(count, false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;

  GeneratedCorpus out;
  out.train.root = out.val_pool.root = out_dir;
  out.train.seed = out.val_pool.seed = seed;
  out.train.split = Split::Train;
  out.val_pool.split = Split::Val;
  for (std::size_t i = 0; i < count; ++i) {
    (is_train[i] ? out.train : out.val_pool).entries.push_back(entries[i]);
  }
  out.catalog = std::move(catalog);

  const fs::path dir(out_dir);
  save_annotations(out.train, (dir / "train.json").string());
  save_annotations(out.val_pool, (dir / "val.json").string());
  save_catalog(out.catalog, (dir / "catalog.json").string());
  json meta = {{"version", 1},
               {"count", count},
               {"seed", seed},
               {"degrade", std::string(kDegradeVersion)},
               {"train_fraction", kTrainFraction},
               {"train", out.train.entries.size()},
               {"val_pool", out.val_pool.entries.size()}};
  write_text((dir / "corpus.json").string(), meta.dump(1));
  return out;
}

}  // namespace pinf
