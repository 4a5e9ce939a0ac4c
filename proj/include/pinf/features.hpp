#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "pinf/image.hpp"

namespace pinf {

inline constexpr std::size_t kFeatureCount = 29;
inline constexpr std::string_view kFeatureLayout = "pinf-v1-29";

// Feature indices, canonical order.
namespace feature {
inline constexpr std::size_t kLogLaplacianVar = 0;
inline constexpr std::size_t kTenengrad = 1;
inline constexpr std::size_t kLumaMean = 2;
inline constexpr std::size_t kLumaStd = 3;
inline constexpr std::size_t kDarkFraction = 4;
inline constexpr std::size_t kBrightFraction = 5;
inline constexpr std::size_t kBorderEdgeRatio = 6;
inline constexpr std::size_t kBorderCenterLumaDiff = 7;
inline constexpr std::size_t kOrientationDeviation = 8;
inline constexpr std::size_t kOrientationEntropy = 9;
inline constexpr std::size_t kFlatBlobArea = 10;
inline constexpr std::size_t kFlatBlobLuma = 11;
inline constexpr std::size_t kSaturation = 12;
inline constexpr std::size_t kGridFirst = 13;  // 4x4 grid, row-major, 13..28
}  // namespace feature

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Per-dimension standardization fitted on a training set.
struct Scaler {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std{};

  static constexpr double kStdFloor = 1e-8;

  FeatureVector apply(const FeatureVector& f) const;
};

/// 0.299 R + 0.587 G + 0.114 B per pixel.
GrayPlane luminance(const RasterImage& img);

/// Population variance of the valid-region 4-neighbour Laplacian response.
/// Throws SizeError when the plane is smaller than 3x3.
double laplacian_variance(const GrayPlane& gray);

/// Throws SizeError for images smaller than 8x8.
FeatureVector extract_features(const RasterImage& img);

/// Throws pinf::Error on an empty list.
Scaler fit_scaler(std::span<const FeatureVector> features);

}  // namespace pinf
