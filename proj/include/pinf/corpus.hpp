#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pinf/image.hpp"
#include "pinf/quality.hpp"

namespace pinf {

enum class Split { Train, Val, Test, Unspecified };

std::string_view split_name(Split s);

struct CorpusEntry {
  std::string file;  // relative to AnnotatedCorpus::root
  QualityAnnotation annotation;
};

struct AnnotatedCorpus {
  std::string root;  // directory the entry paths are relative to
  std::vector<CorpusEntry> entries;
  Split split = Split::Unspecified;
  std::uint64_t seed = 0;

  std::string image_path(const CorpusEntry& e) const;
};

inline constexpr int kAnnotationFormatVersion = 1;

/// Parses an annotation file. "others" and "none" flaw keys are dropped
/// (a notice is written to `notices` when given). Throws SchemaError on
/// duplicate ids, out-of-range labels or missing flaw keys.
AnnotatedCorpus load_annotations(const std::string& path, std::vector<std::string>* notices = nullptr);
AnnotatedCorpus parse_annotations(const std::string& text, const std::string& root,
                                  std::vector<std::string>* notices = nullptr);
std::string annotations_to_json(const AnnotatedCorpus& corpus);
void save_annotations(const AnnotatedCorpus& corpus, const std::string& path);

struct ValidationSplit {
  AnnotatedCorpus val;
  AnnotatedCorpus test;
};

/// Seeded shuffle; the first ceil(n/2) entries become validation data, the
/// rest test data.
ValidationSplit split_validation(const AnnotatedCorpus& corpus, std::uint64_t seed);

// ---------------------------------------------------------------- synthesis

inline constexpr std::string_view kDegradeVersion = "degrade-v1";
inline constexpr std::size_t kSceneSize = 128;

/// Physical parameters per severity 0..5 ("degrade-v1").
struct DegradeTable {
  static constexpr std::array<double, 6> blur_sigma = {0, 0.8, 1.6, 3.2, 6.4, 12.8};
  static constexpr std::array<double, 6> dark_gain = {1.0, 0.7, 0.5, 0.35, 0.2, 0.08};
  static constexpr std::array<double, 6> bright_weight = {0, 0.3, 0.5, 0.65, 0.8, 0.95};
  static constexpr std::array<double, 6> occluder_area = {0, 0.1, 0.25, 0.4, 0.6, 0.85};
  static constexpr std::array<double, 6> rotation_deg = {0, 10, 25, 45, 70, 90};
  static constexpr std::array<double, 6> framing_shift = {0, 0.1, 0.25, 0.45, 0.7, 0.95};
};

struct DegradationSpec {
  FlawMap<SeverityLabel> severity;
  std::uint64_t seed = 0;  // picks shift direction, occluder side and colour
};

/// Framing shift, rotation, blur, dark gain, bright blend, occluder, in that
/// order. A zero severity leaves its stage out entirely.
RasterImage degrade_image(const RasterImage& img, const DegradationSpec& spec);

/// Separable Gaussian blur with clamp-to-edge borders; identity for sigma 0.
RasterImage gaussian_blur(const RasterImage& img, double sigma);

/// u = clamp(round(0.8 * max + 0.4 * mean of the other five), 0, 5).
SeverityLabel unrecognizable_from_flaws(const FlawMap<SeverityLabel>& severity);

struct Scene {
  RasterImage image;
  std::vector<std::string> references;  // 5 template captions
  std::string held_out_caption;         // a sixth paraphrase, never a reference
  std::string color_word;               // colour of the main subject
};

/// Procedural 128x128 scene: gradient background with a floor band, one to
/// three shapes near the centre, a high-frequency label patch on the main
/// shape and mild luminance noise. Deterministic per seed.
Scene render_scene(std::uint64_t seed);

struct CatalogEntry {
  std::string clean;
  std::string degraded;
};
using CaptionCatalog = std::map<std::string, CatalogEntry>;

std::string catalog_to_json(const CaptionCatalog& catalog);
CaptionCatalog load_catalog(const std::string& path);
void save_catalog(const CaptionCatalog& catalog, const std::string& path);

struct GeneratedCorpus {
  AnnotatedCorpus train;
  AnnotatedCorpus val_pool;  // later halved into validation and test
  CaptionCatalog catalog;
};

inline constexpr double kTrainFraction = 0.7;

/// Writes images/<id>.ppm, train.json, val.json, catalog.json and corpus.json
/// under out_dir. A pure function of (count, seed).
GeneratedCorpus generate_corpus(std::size_t count, std::uint64_t seed, const std::string& out_dir);

}  // namespace pinf
