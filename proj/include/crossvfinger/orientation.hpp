#ifndef CROSSVFINGER_ORIENTATION_HPP
#define CROSSVFINGER_ORIENTATION_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "crossvfinger/error.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/preprocess.hpp"

namespace cvf {

inline constexpr double kPi = std::numbers::pi;

inline double degrees(double radians) { return radians * 180.0 / kPi; }
inline double radians(double degrees) { return degrees * kPi / 180.0; }

/// Reduces any angle into [0, pi).
inline double wrap_pi(double angle) {
  double a = std::fmod(angle, kPi);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

struct GradientField {
  Grid<double> gx;
  Grid<double> gy;
  Mask valid;  // false on the 1-pixel border

  int width() const noexcept { return gx.width(); }
  int height() const noexcept { return gx.height(); }
};

struct OrientationField {
  Grid<double> theta;      // radians in [0, pi) where valid
  Grid<double> coherence;  // |(Gxx, Gyy)|, zero when not computed
  Mask valid;

  int width() const noexcept { return theta.width(); }
  int height() const noexcept { return theta.height(); }
  bool is_valid(int row, int col) const { return valid(row, col) != 0; }
};

inline constexpr int kOrientationBins = 8;

struct QuantizedOrientationField {
  Grid<std::uint8_t> bins;  // 1..8 where valid
  Mask valid;

  int width() const noexcept { return bins.width(); }
  int height() const noexcept { return bins.height(); }
};

/// 3x3 Sobel responses; x kernel [-1 0 1; -2 0 2; -1 0 1], y is its transpose.
inline GradientField compute_gradients(const GrayImage& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 3 || h < 3) throw Error(ErrorCode::ImageTooSmall, "gradients need at least 3x3 pixels");
  GradientField g{Grid<double>(w, h), Grid<double>(w, h), Mask(w, h, 0)};
  for (int r = 1; r + 1 < h; ++r) {
    for (int c = 1; c + 1 < w; ++c) {
      const double a = img(r - 1, c - 1), b = img(r - 1, c), d = img(r - 1, c + 1);
      const double e = img(r, c - 1), f = img(r, c + 1);
      const double p = img(r + 1, c - 1), q = img(r + 1, c), s = img(r + 1, c + 1);
      g.gx(r, c) = (d + 2.0 * f + s) - (a + 2.0 * e + p);
      g.gy(r, c) = (p + 2.0 * q + s) - (a + 2.0 * b + d);
      g.valid(r, c) = 1;
    }
  }
  return g;
}

namespace detail {

// Sum of `src` over a (2*radius+1)^2 window clipped to the grid. Two
// direct passes (no running-sum subtraction) so that an all-zero window
// sums to exactly zero.
inline Grid<double> window_sum(const Grid<double>& src, int radius) {
  const int w = src.width();
  const int h = src.height();
  Grid<double> rows(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      const int lo = std::max(0, c - radius), hi = std::min(w - 1, c + radius);
      for (int k = lo; k <= hi; ++k) acc += src(r, k);
      rows(r, c) = acc;
    }
  }
  Grid<double> out(w, h);
  for (int r = 0; r < h; ++r) {
    const int lo = std::max(0, r - radius), hi = std::min(h - 1, r + radius);
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = lo; k <= hi; ++k) acc += rows(k, c);
      out(r, c) = acc;
    }
  }
  return out;
}

// Masked separable Gaussian convolution; out-of-range and masked samples
// contribute nothing.
inline Grid<double> gaussian_blur(const Grid<double>& src, const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  const int w = src.width();
  const int h = src.height();
  Grid<double> tmp(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int cc = c + k;
        if (cc >= 0 && cc < w) acc += kernel[k + radius] * src(r, cc);
      }
      tmp(r, c) = acc;
    }
  }
  Grid<double> out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = r + k;
        if (rr >= 0 && rr < h) acc += kernel[k + radius] * tmp(rr, c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Gaussian taps truncated at 3 sigma, normalized to unit sum.
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

/// Least-squares ridge orientation over a w x w window (doubled-angle
/// averaging of gradients), rotated by pi/2 so theta follows the ridge
/// rather than the gradient. Windows with no anisotropic energy are invalid.
inline OrientationField estimate_orientation(const GradientField& grad, int window = 17) {
  if (window < 3 || window % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "orientation window must be odd and >= 3");
  }
  const int w = grad.width();
  const int h = grad.height();
  Grid<double> gxx(w, h), gyy(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!grad.valid(r, c)) continue;
      const double x = grad.gx(r, c), y = grad.gy(r, c);
      gxx(r, c) = x * x - y * y;
      gyy(r, c) = 2.0 * x * y;
    }
  }
  const Grid<double> sxx = detail::window_sum(gxx, window / 2);
  const Grid<double> syy = detail::window_sum(gyy, window / 2);
  OrientationField of{Grid<double>(w, h), Grid<double>(w, h), Mask(w, h, 0)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!grad.valid(r, c)) continue;
      const double a = sxx(r, c), b = syy(r, c);
      if (a == 0.0 && b == 0.0) continue;
      of.theta(r, c) = wrap_pi(0.5 * std::atan2(b, a) + 0.5 * kPi);
      of.coherence(r, c) = std::hypot(a, b);
      of.valid(r, c) = 1;
    }
  }
  return of;
}

/// Drops pixels outside the foreground from the field's validity mask.
inline OrientationField restrict_to(OrientationField of, const ForegroundMask& mask) {
  if (!of.valid.same_shape(mask.flags)) {
    throw Error(ErrorCode::DimensionMismatch, "mask and orientation field differ in size");
  }
  for (int r = 0; r < of.height(); ++r)
    for (int c = 0; c < of.width(); ++c)
      if (!mask(r, c)) of.valid(r, c) = 0;
  return of;
}

/// Gaussian smoothing in doubled-angle space: blur cos(2θ) and sin(2θ)
/// over valid pixels, then halve the angle of the blurred vector.
inline OrientationField smooth_orientation(const OrientationField& of, double sigma = 3.0) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidConfig, "smoothing sigma must be > 0");
  const int w = of.width();
  const int h = of.height();
  Grid<double> cos2(w, h), sin2(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!of.is_valid(r, c)) continue;
      cos2(r, c) = std::cos(2.0 * of.theta(r, c));
      sin2(r, c) = std::sin(2.0 * of.theta(r, c));
    }
  }
  const auto kernel = gaussian_kernel(sigma);
  const Grid<double> bc = detail::gaussian_blur(cos2, kernel);
  const Grid<double> bs = detail::gaussian_blur(sin2, kernel);
  OrientationField out = of;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!of.is_valid(r, c)) continue;
      if (bc(r, c) == 0.0 && bs(r, c) == 0.0) continue;  // perfect cancellation: keep input
      out.theta(r, c) = wrap_pi(0.5 * std::atan2(bs(r, c), bc(r, c)));
    }
  }
  return out;
}

inline constexpr int kDominantHistogramBins = 180;

/// Peak of a 1-degree histogram of valid orientations, returned as the
/// bin's center in radians. Ties resolve to the smallest angle.
inline double dominant_orientation(const OrientationField& of) {
  std::array<long, kDominantHistogramBins> hist{};
  long total = 0;
  for (int r = 0; r < of.height(); ++r) {
    for (int c = 0; c < of.width(); ++c) {
      if (!of.is_valid(r, c)) continue;
      const int bin = std::clamp(static_cast<int>(std::floor(degrees(of.theta(r, c)))), 0,
                                 kDominantHistogramBins - 1);
      ++hist[bin];
      ++total;
    }
  }
  if (total == 0) throw Error(ErrorCode::NoValidPixels, "orientation field has no valid pixel");
  int best = 0;
  for (int b = 1; b < kDominantHistogramBins; ++b)
    if (hist[b] > hist[best]) best = b;
  return radians(best + 0.5);
}

/// psi = theta - Θ when theta >= Θ, otherwise pi - Θ + theta.
inline double align_angle(double theta, double dominant) {
  const double psi = theta >= dominant ? theta - dominant : kPi - dominant + theta;
  return psi >= kPi ? psi - kPi : psi;
}

inline OrientationField align_to_dominant(const OrientationField& of, double dominant) {
  if (!(dominant >= 0.0 && dominant < kPi)) {
    throw Error(ErrorCode::InvalidConfig, "dominant orientation must lie in [0, pi)");
  }
  OrientationField out = of;
  for (int r = 0; r < of.height(); ++r)
    for (int c = 0; c < of.width(); ++c)
      if (of.is_valid(r, c)) out.theta(r, c) = align_angle(of.theta(r, c), dominant);
  return out;
}

/// Eight half-open 22.5 degree ranges (0,22.5] → 1 ... (157.5,180] → 8;
/// an angle of exactly 0 is the same orientation as 180 and maps to 8.
inline int quantize_angle(double theta) {
  double deg = degrees(theta);
  if (deg <= 0.0) deg = 180.0;
  const int bin = static_cast<int>(std::ceil(deg / 22.5));
  return std::clamp(bin, 1, kOrientationBins);
}

inline QuantizedOrientationField quantize(const OrientationField& of) {
  QuantizedOrientationField q{Grid<std::uint8_t>(of.width(), of.height(), 0), of.valid};
  for (int r = 0; r < of.height(); ++r)
    for (int c = 0; c < of.width(); ++c)
      if (of.is_valid(r, c)) q.bins(r, c) = static_cast<std::uint8_t>(quantize_angle(of.theta(r, c)));
  return q;
}

/// Debug export: one "row,col,theta_degrees,valid" line per pixel.
inline void save_orientation_csv(const OrientationField& of, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out << "row,col,theta_degrees,valid\n";
  out.precision(9);
  for (int r = 0; r < of.height(); ++r)
    for (int c = 0; c < of.width(); ++c)
      out << r << ',' << c << ',' << degrees(of.theta(r, c)) << ',' << int(of.is_valid(r, c)) << '\n';
  if (!out) throw Error(ErrorCode::IOFailure, "short write " + path.string());
}

}  // namespace cvf

#endif  // CROSSVFINGER_ORIENTATION_HPP
