#include "pinf/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pinf/quality.hpp"

namespace pinf {

namespace {

constexpr double kBorderFraction = 0.15;
constexpr std::size_t kBlockGrid = 8;
constexpr double kFlatBlockVariance = 1e-4;
constexpr std::size_t kOrientationBins = 8;
constexpr std::size_t kLumaGrid = 4;

struct Gradients {
  std::size_t width = 0;  // of the valid region, i.e. image width - 2
  std::size_t height = 0;
  std::vector<double> gx;
  std::vector<double> gy;
};

Gradients sobel(const GrayPlane& g) {
  Gradients out;
  out.width = g.width - 2;
  out.height = g.height - 2;
  out.gx.resize(out.width * out.height);
  out.gy.resize(out.width * out.height);
  for (std::size_t y = 1; y + 1 < g.height; ++y) {
    for (std::size_t x = 1; x + 1 < g.width; ++x) {
      const double tl = g.at(x - 1, y - 1), tc = g.at(x, y - 1), tr = g.at(x + 1, y - 1);
      const double ml = g.at(x - 1, y), mr = g.at(x + 1, y);
      const double bl = g.at(x - 1, y + 1), bc = g.at(x, y + 1), br = g.at(x + 1, y + 1);
      const std::size_t i = (y - 1) * out.width + (x - 1);
      out.gx[i] = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      out.gy[i] = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
    }
  }
  return out;
}

bool in_border(std::size_t x, std::size_t y, std::size_t width, std::size_t height) {
  const double bx = kBorderFraction * static_cast<double>(width);
  const double by = kBorderFraction * static_cast<double>(height);
  const double fx = static_cast<double>(x);
  const double fy = static_cast<double>(y);
  return fx < bx || fx >= static_cast<double>(width) - bx || fy < by ||
         fy >= static_cast<double>(height) - by;
}

struct FlatBlob {
  double area_fraction = 0.0;
  double mean_luma = 0.0;
};

FlatBlob largest_flat_blob(const GrayPlane& g) {
  const std::size_t bw = g.width / kBlockGrid;
  const std::size_t bh = g.height / kBlockGrid;
  std::array<bool, kBlockGrid * kBlockGrid> flat{};
  std::array<double, kBlockGrid * kBlockGrid> block_mean{};
  const double n = static_cast<double>(bw * bh);
  for (std::size_t by = 0; by < kBlockGrid; ++by) {
    for (std::size_t bx = 0; bx < kBlockGrid; ++bx) {
      double sum = 0.0;
      for (std::size_t y = by * bh; y < (by + 1) * bh; ++y)
        for (std::size_t x = bx * bw; x < (bx + 1) * bw; ++x) sum += g.at(x, y);
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t y = by * bh; y < (by + 1) * bh; ++y)
        for (std::size_t x = bx * bw; x < (bx + 1) * bw; ++x) {
          const double d = g.at(x, y) - mean;
          ss += d * d;
        }
      block_mean[by * kBlockGrid + bx] = mean;
      flat[by * kBlockGrid + bx] = ss / n < kFlatBlockVariance;
    }
  }

  // 4-connected components; first-found wins ties.
  std::array<bool, kBlockGrid * kBlockGrid> seen{};
  FlatBlob best;
  std::size_t best_count = 0;
  for (std::size_t start = 0; start < flat.size(); ++start) {
    if (!flat[start] || seen[start]) continue;
    std::vector<std::size_t> stack{start};
    seen[start] = true;
    std::size_t count = 0;
    double luma = 0.0;
    while (!stack.empty()) {
      const std::size_t cell = stack.back();
      stack.pop_back();
      ++count;
      luma += block_mean[cell];
      const std::size_t cx = cell % kBlockGrid, cy = cell / kBlockGrid;
      auto visit = [&](std::size_t nx, std::size_t ny) {
        const std::size_t j = ny * kBlockGrid + nx;
        if (flat[j] && !seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
      };
      if (cx > 0) visit(cx - 1, cy);
      if (cx + 1 < kBlockGrid) visit(cx + 1, cy);
      if (cy > 0) visit(cx, cy - 1);
      if (cy + 1 < kBlockGrid) visit(cx, cy + 1);
    }
    if (count > best_count) {
      best_count = count;
      best.area_fraction = static_cast<double>(count) / static_cast<double>(flat.size());
      best.mean_luma = luma / static_cast<double>(count);
    }
  }
  return best;
}

}  // namespace

GrayPlane luminance(const RasterImage& img) {
  GrayPlane g{img.width(), img.height(), {}};
  g.values.reserve(img.pixels().size());
  for (const Rgb& p : img.pixels()) g.values.push_back(0.299 * p.r + 0.587 * p.g + 0.114 * p.b);
  return g;
}

double laplacian_variance(const GrayPlane& g) {
  if (g.width < 3 || g.height < 3) {
    throw SizeError("Laplacian needs at least 3x3 pixels, got " + std::to_string(g.width) + "x" +
                    std::to_string(g.height));
  }
  std::vector<double> response;
  response.reserve((g.width - 2) * (g.height - 2));
  for (std::size_t y = 1; y + 1 < g.height; ++y) {
    for (std::size_t x = 1; x + 1 < g.width; ++x) {
      response.push_back(g.at(x, y - 1) + g.at(x - 1, y) + g.at(x + 1, y) + g.at(x, y + 1) -
                         4.0 * g.at(x, y));
    }
  }
  double mean = 0.0;
  for (double r : response) mean += r;
  mean /= static_cast<double>(response.size());
  double var = 0.0;
  for (double r : response) var += (r - mean) * (r - mean);
  return var / static_cast<double>(response.size());
}

FeatureVector extract_features(const RasterImage& img) {
  if (img.width() < 8 || img.height() < 8) {
    throw SizeError("feature extraction needs at least 8x8 pixels, got " +
                    std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  using namespace feature;
  FeatureVector f;
  const GrayPlane gray = luminance(img);
  const double n = static_cast<double>(gray.values.size());

  f[kLogLaplacianVar] = std::log1p(laplacian_variance(gray));

  // Luminance statistics.
  double sum = 0.0, dark = 0.0, bright = 0.0;
  for (double v : gray.values) {
    sum += v;
    if (v < 0.05) dark += 1.0;
    if (v > 0.95) bright += 1.0;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : gray.values) ss += (v - mean) * (v - mean);
  f[kLumaMean] = mean;
  f[kLumaStd] = std::sqrt(ss / n);
  f[kDarkFraction] = dark / n;
  f[kBrightFraction] = bright / n;

  // Gradient-based cues.
  const Gradients grad = sobel(gray);
  double mag_sum = 0.0;
  double border_energy = 0.0, center_energy = 0.0;
  std::size_t border_count = 0, center_count = 0;
  double sin4 = 0.0, cos4 = 0.0;
  std::array<double, kOrientationBins> hist{};
  for (std::size_t y = 0; y < grad.height; ++y) {
    for (std::size_t x = 0; x < grad.width; ++x) {
      const std::size_t i = y * grad.width + x;
      const double gx = grad.gx[i], gy = grad.gy[i];
      const double energy = gx * gx + gy * gy;
      const double mag = std::sqrt(energy);
      mag_sum += mag;
      if (in_border(x + 1, y + 1, gray.width, gray.height)) {
        border_energy += energy;
        ++border_count;
      } else {
        center_energy += energy;
        ++center_count;
      }
      if (mag > 0.0) {
        const double theta = std::atan2(gy, gx);
        sin4 += mag * std::sin(4.0 * theta);
        cos4 += mag * std::cos(4.0 * theta);
        double folded = std::fmod(theta + std::numbers::pi, std::numbers::pi);
        auto bin = static_cast<std::size_t>(folded / std::numbers::pi * kOrientationBins);
        hist[std::min(bin, kOrientationBins - 1)] += mag;
      }
    }
  }
  f[kTenengrad] = mag_sum / static_cast<double>(grad.gx.size());

  const double border_mean = border_count ? border_energy / static_cast<double>(border_count) : 0.0;
  const double center_mean = center_count ? center_energy / static_cast<double>(center_count) : 0.0;
  f[kBorderEdgeRatio] =
      border_mean + center_mean > 0.0 ? border_mean / (border_mean + center_mean) : 0.0;

  double luma_border = 0.0, luma_center = 0.0;
  std::size_t nb = 0, nc = 0;
  for (std::size_t y = 0; y < gray.height; ++y) {
    for (std::size_t x = 0; x < gray.width; ++x) {
      if (in_border(x, y, gray.width, gray.height)) {
        luma_border += gray.at(x, y);
        ++nb;
      } else {
        luma_center += gray.at(x, y);
        ++nc;
      }
    }
  }
  f[kBorderCenterLumaDiff] = (nb ? luma_border / static_cast<double>(nb) : 0.0) -
                             (nc ? luma_center / static_cast<double>(nc) : 0.0);

  // Dominant orientation modulo 90 degrees, from the magnitude-weighted mean
  // of 4*theta; 0 = axis aligned, 1 = diagonal.
  if (sin4 != 0.0 || cos4 != 0.0) {
    const double dominant = std::atan2(sin4, cos4) / 4.0;  // (-pi/4, pi/4]
    f[kOrientationDeviation] = std::min(1.0, std::abs(dominant) / (std::numbers::pi / 4.0));
  }
  double hist_total = 0.0;
  for (double h : hist) hist_total += h;
  if (hist_total > 0.0) {
    double entropy = 0.0;
    for (double h : hist) {
      if (h > 0.0) {
        const double p = h / hist_total;
        entropy -= p * std::log2(p);
      }
    }
    f[kOrientationEntropy] = entropy;
  }

  const FlatBlob blob = largest_flat_blob(gray);
  f[kFlatBlobArea] = blob.area_fraction;
  f[kFlatBlobLuma] = blob.mean_luma;

  double sat = 0.0;
  for (const Rgb& p : img.pixels()) {
    sat += std::max({p.r, p.g, p.b}) - std::min({p.r, p.g, p.b});
  }
  f[kSaturation] = sat / n;

  for (std::size_t gy = 0; gy < kLumaGrid; ++gy) {
    for (std::size_t gx = 0; gx < kLumaGrid; ++gx) {
      const std::size_t x0 = gx * gray.width / kLumaGrid, x1 = (gx + 1) * gray.width / kLumaGrid;
      const std::size_t y0 = gy * gray.height / kLumaGrid, y1 = (gy + 1) * gray.height / kLumaGrid;
      double cell = 0.0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) cell += gray.at(x, y);
      f[kGridFirst + gy * kLumaGrid + gx] = cell / static_cast<double>((x1 - x0) * (y1 - y0));
    }
  }
  return f;
}

FeatureVector Scaler::apply(const FeatureVector& f) const {
  FeatureVector out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (f[i] - mean[i]) / std[i];
  return out;
}

Scaler fit_scaler(std::span<const FeatureVector> features) {
  if (features.empty()) throw Error("cannot fit a scaler on an empty feature list");
  Scaler s;
  const double n = static_cast<double>(features.size());
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    double sum = 0.0;
    for (const auto& f : features) sum += f[i];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& f : features) ss += (f[i] - mean) * (f[i] - mean);
    s.mean[i] = mean;
    s.std[i] = std::max(std::sqrt(ss / n), Scaler::kStdFloor);
  }
  return s;
}

}  // namespace pinf
