#ifndef CROSSVFINGER_PREPROCESS_HPP
#define CROSSVFINGER_PREPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>

#include "crossvfinger/error.hpp"
#include "crossvfinger/image.hpp"

namespace cvf {

/// Per-pixel foreground flags (1 = fingerprint region).
struct ForegroundMask {
  Mask flags;

  int width() const noexcept { return flags.width(); }
  int height() const noexcept { return flags.height(); }
  bool operator()(int row, int col) const { return flags(row, col) != 0; }

  double coverage() const {
    if (flags.empty()) return 0.0;
    const auto on = std::ranges::count_if(flags.values(), [](std::uint8_t f) { return f != 0; });
    return static_cast<double>(on) / static_cast<double>(flags.size());
  }
};

inline constexpr double kMinForegroundFraction = 0.05;

struct ImageMoments {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

inline ImageMoments moments(const Grid<double>& pixels) {
  ImageMoments m;
  if (pixels.empty()) return m;
  const double n = static_cast<double>(pixels.size());
  for (double v : pixels.values()) m.mean += v;
  m.mean /= n;
  for (double v : pixels.values()) m.variance += (v - m.mean) * (v - m.mean);
  m.variance /= n;
  return m;
}

/// Mean/variance normalization: every pixel is mapped to
/// target_mean ± sqrt(target_variance * (I - mean)^2 / variance), then clamped.
inline GrayImage normalize(const GrayImage& img, double target_mean = 100.0,
                           double target_variance = 100.0) {
  if (target_variance < 0.0) throw Error(ErrorCode::InvalidConfig, "target variance < 0");
  const ImageMoments m = moments(img.pixels);
  if (!(m.variance > 0.0)) throw Error(ErrorCode::ZeroVariance, "constant image cannot be normalized");
  const double gain = std::sqrt(target_variance / m.variance);
  GrayImage out = img;
  for (double& v : out.pixels.values()) {
    v = std::clamp(target_mean + gain * (v - m.mean), 0.0, 255.0);
  }
  return out;
}

/// Block-variance segmentation. Blocks at the right/bottom edge may be
/// smaller than `block` and are evaluated on the pixels they actually hold.
inline ForegroundMask segment(const GrayImage& img, int block = 16, double variance_threshold = 100.0) {
  if (block < 1) throw Error(ErrorCode::InvalidConfig, "segmentation block must be >= 1");
  ForegroundMask mask{Mask(img.width(), img.height(), 0)};
  for (int r0 = 0; r0 < img.height(); r0 += block) {
    const int r1 = std::min(r0 + block, img.height());
    for (int c0 = 0; c0 < img.width(); c0 += block) {
      const int c1 = std::min(c0 + block, img.width());
      const double n = static_cast<double>((r1 - r0) * (c1 - c0));
      double sum = 0.0;
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) sum += img(r, c);
      const double mean = sum / n;
      double var = 0.0;
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) var += (img(r, c) - mean) * (img(r, c) - mean);
      var /= n;
      if (var >= variance_threshold) {
        for (int r = r0; r < r1; ++r)
          for (int c = c0; c < c1; ++c) mask.flags(r, c) = 1;
      }
    }
  }
  if (mask.coverage() < kMinForegroundFraction) {
    throw Error(ErrorCode::EmptyForeground, "less than 5% of the image passed segmentation");
  }
  return mask;
}

/// Debug export: foreground as 255, background as 0.
inline void save_mask_pgm(const ForegroundMask& mask, const std::filesystem::path& path) {
  GrayImage img(mask.width(), mask.height());
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) img(r, c) = mask(r, c) ? 255.0 : 0.0;
  save_pgm(img, path);
}

}  // namespace cvf

#endif  // CROSSVFINGER_PREPROCESS_HPP
