#ifndef CROSSVFINGER_GABORHOG_HPP
#define CROSSVFINGER_GABORHOG_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "crossvfinger/error.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/orientation.hpp"

namespace cvf {

inline constexpr int kGaborScales = 4;
inline constexpr int kGaborOrientations = 8;
inline constexpr int kHogCells = 9;  // 3 x 3 grid

struct GaborConfig {
  std::vector<double> wavelengths = {4.0, 6.0, 8.0, 12.0};
  double sigma_ratio = 0.56;  // envelope sigma / wavelength
  double aspect = 1.0;
  double phase = 0.0;  // 0 = even-symmetric (cosine) kernels
};

/// One real Gabor kernel, DC-free over its square support of radius
/// ceil(3 * sigma). Stored both densely and, for isotropic envelopes, as
/// separable factors: kernel = hc ⊗ vc − hs ⊗ vs − dc.
struct GaborFilter {
  int scale_index = 0;
  double orientation = 0.0;  // radians; the wave vector direction
  double wavelength = 0.0;
  double sigma = 0.0;
  double aspect = 1.0;
  double phase = 0.0;
  int radius = 0;
  Grid<double> kernel;  // (2r+1)^2, indexed (dy + r, dx + r)
  std::vector<double> hc, hs, vc, vs;
  double dc = 0.0;

  bool separable() const { return !hc.empty(); }
  int size() const { return 2 * radius + 1; }
};

struct GaborBank {
  std::vector<GaborFilter> filters;  // scale-major, orientation-minor

  std::size_t size() const { return filters.size(); }
  int max_radius() const {
    int r = 0;
    for (const auto& f : filters) r = std::max(r, f.radius);
    return r;
  }
};

inline double gabor_orientation(int index) { return radians(22.5 * index); }

inline GaborFilter make_gabor_filter(int scale_index, double orientation, double wavelength,
                                     double sigma, double aspect, double phase) {
  GaborFilter f{scale_index, orientation, wavelength, sigma, aspect, phase};
  f.radius = static_cast<int>(std::ceil(3.0 * sigma));
  const int n = f.size();
  const double ct = std::cos(orientation), st = std::sin(orientation);
  const double k = 2.0 * kPi / wavelength;
  f.kernel = Grid<double>(n, n);
  double sum = 0.0;
  for (int dy = -f.radius; dy <= f.radius; ++dy) {
    for (int dx = -f.radius; dx <= f.radius; ++dx) {
      const double xr = dx * ct + dy * st;
      const double yr = -dx * st + dy * ct;
      const double env = std::exp(-(xr * xr + aspect * aspect * yr * yr) / (2.0 * sigma * sigma));
      const double v = env * std::cos(k * xr + phase);
      f.kernel(dy + f.radius, dx + f.radius) = v;
      sum += v;
    }
  }
  f.dc = sum / (static_cast<double>(n) * n);
  for (double& v : f.kernel.values()) v -= f.dc;

  if (aspect == 1.0) {
    const double a = k * ct, b = k * st;
    f.hc.resize(n);
    f.hs.resize(n);
    f.vc.resize(n);
    f.vs.resize(n);
    double shc = 0, shs = 0, svc = 0, svs = 0;
    for (int t = -f.radius; t <= f.radius; ++t) {
      const double g = std::exp(-(t * t) / (2.0 * sigma * sigma));
      f.hc[t + f.radius] = g * std::cos(a * t + phase);
      f.hs[t + f.radius] = g * std::sin(a * t + phase);
      f.vc[t + f.radius] = g * std::cos(b * t);
      f.vs[t + f.radius] = g * std::sin(b * t);
      shc += f.hc[t + f.radius];
      shs += f.hs[t + f.radius];
      svc += f.vc[t + f.radius];
      svs += f.vs[t + f.radius];
    }
    f.dc = (shc * svc - shs * svs) / (static_cast<double>(n) * n);
  }
  return f;
}

/// 4 scales x 8 orientations (0, 22.5, ..., 157.5 degrees).
inline GaborBank make_gabor_bank(const GaborConfig& config = {}) {
  if (config.wavelengths.size() != kGaborScales) {
    throw Error(ErrorCode::InvalidConfig, "Gabor bank needs exactly 4 wavelengths");
  }
  for (double l : config.wavelengths) {
    if (!(l > 0.0)) throw Error(ErrorCode::InvalidConfig, "Gabor wavelength must be > 0");
  }
  if (!(config.sigma_ratio > 0.0) || !(config.aspect > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "Gabor sigma ratio and aspect must be > 0");
  }
  GaborBank bank;
  for (int s = 0; s < kGaborScales; ++s) {
    const double lambda = config.wavelengths[s];
    for (int o = 0; o < kGaborOrientations; ++o) {
      bank.filters.push_back(make_gabor_filter(s, gabor_orientation(o), lambda,
                                               config.sigma_ratio * lambda, config.aspect, config.phase));
    }
  }
  return bank;
}

struct FeatureMap {
  Grid<double> responses;
  int scale_index = 0;
  int orientation_index = 0;
};

namespace detail {

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

inline Grid<double> pad_reflect(const Grid<double>& src, int radius) {
  Grid<double> out(src.width() + 2 * radius, src.height() + 2 * radius);
  for (int r = 0; r < out.height(); ++r) {
    const int sr = reflect101(r - radius, src.height());
    for (int c = 0; c < out.width(); ++c) out(r, c) = src(sr, reflect101(c - radius, src.width()));
  }
  return out;
}

// Sum over (2r+1)^2 windows of a padded grid, indexed by unpadded position.
inline Grid<double> box_sums(const Grid<double>& padded, int radius, int width, int height) {
  const int n = 2 * radius + 1;
  Grid<double> rows(width, padded.height());
  for (int r = 0; r < padded.height(); ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += padded(r, c + k);
      rows(r, c) = acc;
    }
  }
  Grid<double> out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += rows(r + k, c);
      out(r, c) = acc;
    }
  }
  return out;
}

inline Grid<double> filter_separable(const Grid<double>& padded, const Grid<double>& box,
                                     const GaborFilter& f, int pad, int width, int height) {
  const int rad = f.radius;
  const int n = f.size();
  const int off = pad - rad;
  Grid<double> h1(width, height + 2 * rad), h2(width, height + 2 * rad);
  for (int r = 0; r < height + 2 * rad; ++r) {
    const int pr = r + off;
    for (int c = 0; c < width; ++c) {
      double a = 0.0, b = 0.0;
      for (int k = 0; k < n; ++k) {
        const double v = padded(pr, c + off + k);
        a += f.hc[k] * v;
        b += f.hs[k] * v;
      }
      h1(r, c) = a;
      h2(r, c) = b;
    }
  }
  Grid<double> out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += f.vc[k] * h1(r + k, c) - f.vs[k] * h2(r + k, c);
      out(r, c) = acc - f.dc * box(r, c);
    }
  }
  return out;
}

inline Grid<double> filter_direct(const Grid<double>& padded, const GaborFilter& f, int pad,
                                  int width, int height) {
  const int off = pad - f.radius;
  Grid<double> out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < f.size(); ++i)
        for (int j = 0; j < f.size(); ++j) acc += f.kernel(i, j) * padded(r + off + i, c + off + j);
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Same-size correlation of the image with every kernel, reflective
/// (mirror, edge not repeated) border. The signed real response is kept.
inline std::vector<FeatureMap> apply_bank(const GrayImage& img, const GaborBank& bank) {
  const int pad = bank.max_radius();
  const int w = img.width();
  const int h = img.height();
  if (std::min(w, h) < 2 * pad + 1) {
    throw Error(ErrorCode::ImageTooSmall, "image smaller than the largest Gabor kernel");
  }
  const Grid<double> padded = detail::pad_reflect(img.pixels, pad);
  std::vector<Grid<double>> boxes(static_cast<std::size_t>(pad) + 1);
  std::vector<FeatureMap> maps;
  maps.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const GaborFilter& f = bank.filters[i];
    FeatureMap m;
    m.scale_index = f.scale_index;
    m.orientation_index = static_cast<int>(i % kGaborOrientations);
    if (f.separable()) {
      Grid<double>& box = boxes[f.radius];
      if (box.empty()) {
        const Grid<double> sub = detail::pad_reflect(img.pixels, f.radius);
        box = detail::box_sums(sub, f.radius, w, h);
      }
      m.responses = detail::filter_separable(padded, box, f, pad, w, h);
    } else {
      m.responses = detail::filter_direct(padded, f, pad, w, h);
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

inline constexpr int kDefaultHogBins = 9;
inline constexpr double kDeadBlockNorm = 1e-8;

/// Cell boundaries of a 3-way split; the last cell absorbs the remainder.
inline std::array<int, 4> cell_edges(int extent) {
  const int step = extent / 3;
  return {0, step, 2 * step, extent};
}

/// HoG over a 3x3 cell grid: centered-difference gradients (edge
/// replicated), unsigned orientation in [0, 180) with bin centers at
/// k*180/bins, magnitude votes split linearly between the two nearest
/// bins. The 9 cell histograms form one L2-normalized block; a block with
/// negligible energy stays all-zero.
inline std::vector<double> hog_of_map(const Grid<double>& map, int bins = kDefaultHogBins) {
  if (bins < 1) throw Error(ErrorCode::InvalidConfig, "HoG needs at least one bin");
  const int w = map.width();
  const int h = map.height();
  if (w < 3 || h < 3) throw Error(ErrorCode::ImageTooSmall, "HoG needs at least 3x3 pixels");
  std::vector<double> block(static_cast<std::size_t>(kHogCells) * bins, 0.0);
  const auto rows = cell_edges(h);
  const auto cols = cell_edges(w);
  const double bin_width = kPi / bins;
  for (int cy = 0; cy < 3; ++cy) {
    for (int cx = 0; cx < 3; ++cx) {
      double* hist = block.data() + static_cast<std::size_t>(cy * 3 + cx) * bins;
      for (int r = rows[cy]; r < rows[cy + 1]; ++r) {
        for (int c = cols[cx]; c < cols[cx + 1]; ++c) {
          const double gx = map(r, std::min(c + 1, w - 1)) - map(r, std::max(c - 1, 0));
          const double gy = map(std::min(r + 1, h - 1), c) - map(std::max(r - 1, 0), c);
          const double mag = std::hypot(gx, gy);
          if (mag == 0.0) continue;
          double angle = std::atan2(gy, gx);
          if (angle < 0.0) angle += kPi;
          if (angle >= kPi) angle -= kPi;
          const double pos = angle / bin_width;
          const double base = std::floor(pos);
          const double frac = pos - base;
          const int lo = static_cast<int>(base) % bins;
          hist[lo] += mag * (1.0 - frac);
          if (frac > 0.0) hist[(lo + 1) % bins] += mag * frac;
        }
      }
    }
  }
  double norm2 = 0.0;
  for (double v : block) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (norm <= kDeadBlockNorm) {
    std::ranges::fill(block, 0.0);
  } else {
    for (double& v : block) v /= norm;
  }
  return block;
}

struct GaborHogDescriptor {
  std::vector<double> values;
  int bins = kDefaultHogBins;
  int maps = kGaborScales * kGaborOrientations;
};

inline std::size_t gabor_hog_length(int bins) {
  return static_cast<std::size_t>(kGaborScales) * kGaborOrientations * kHogCells * bins;
}

inline GaborHogDescriptor build_gabor_hog(const GrayImage& img, const GaborBank& bank,
                                          int bins = kDefaultHogBins) {
  GaborHogDescriptor desc;
  desc.bins = bins;
  desc.maps = static_cast<int>(bank.size());
  desc.values.reserve(bank.size() * kHogCells * bins);
  for (const FeatureMap& m : apply_bank(img, bank)) {
    const auto block = hog_of_map(m.responses, bins);
    desc.values.insert(desc.values.end(), block.begin(), block.end());
  }
  return desc;
}

}  // namespace cvf

#endif  // CROSSVFINGER_GABORHOG_HPP
