#ifndef CROSSVFINGER_SYNTH_HPP
#define CROSSVFINGER_SYNTH_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "crossvfinger/error.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/orientation.hpp"

namespace cvf {

/// Acquisition model of one synthetic sensor.
struct SensorProfile {
  std::string name;
  double scale = 1.0;           // geometric magnification of ridge spacing
  double gain = 1.0;            // contrast multiplier
  double offset = 0.0;          // intensity offset
  double noise_sigma = 2.0;     // additive Gaussian noise
  double crop = 0.0;            // fraction of the canvas side removed
  double max_rotation_deg = 5.0;
  double max_shift_px = 6.0;
};

inline std::vector<SensorProfile> default_sensor_profiles() {
  return {SensorProfile{"A", 1.0, 1.0, 0.0, 2.0, 0.0},
          SensorProfile{"B", 1.15, 0.8, 15.0, 6.0, 0.10}};
}

inline void validate_profile(const SensorProfile& p) {
  auto fail = [&](const std::string& why) { throw Error(ErrorCode::InvalidProfile, "profile '" + p.name + "': " + why); };
  if (p.name.empty()) fail("name must not be empty");
  for (char ch : p.name) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-') fail("name may hold only letters, digits and '-'");
  }
  if (!(p.scale >= 0.5 && p.scale <= 2.0)) fail("scale must lie in [0.5, 2]");
  if (!(p.gain > 0.0)) fail("gain must be > 0");
  if (!std::isfinite(p.offset)) fail("offset must be finite");
  if (!(p.noise_sigma >= 0.0)) fail("noise sigma must be >= 0");
  if (!(p.crop >= 0.0 && p.crop < 0.5)) fail("crop must lie in [0, 0.5)");
  if (!(p.max_rotation_deg >= 0.0 && p.max_rotation_deg <= 45.0)) fail("rotation must lie in [0, 45] degrees");
  if (!(p.max_shift_px >= 0.0)) fail("shift must be >= 0");
}

struct SynthOptions {
  int canvas = 200;         // impression side before cropping
  int master_canvas = 256;  // rendered ridge pattern side
  int iterations = 7;
  double min_period = 5.0;
  double max_period = 11.0;
};

/// Ridge pattern of one finger, independent of any sensor.
struct MasterFinger {
  Grid<double> ink;          // [0, 1], 1 = ridge centre, 0 = valley or background
  Grid<double> orientation;  // ridge direction in [0, pi)
  double period = 0.0;       // pixels
};

namespace detail {

inline std::mt19937_64 synth_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                                 std::uint64_t d = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c),
                    static_cast<std::uint32_t>(d)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Zero-pole orientation model with a smooth random perturbation.
inline Grid<double> master_orientation(std::mt19937_64& rng, int n) {
  struct Pole {
    double x, y, sign;
  };
  std::vector<Pole> poles;
  const double c = n / 2.0;
  const int kind = std::uniform_int_distribution<int>(0, 3)(rng);  // 0 arch, 1-2 loop, 3 whorl
  if (kind == 1 || kind == 2) {
    const double cx = c + uniform(rng, -0.12, 0.12) * n;
    const double cy = c + uniform(rng, -0.15, 0.0) * n;
    poles.push_back({cx, cy, 1.0});
    poles.push_back({cx + (kind == 1 ? 1 : -1) * uniform(rng, 0.15, 0.3) * n, cy + uniform(rng, 0.25, 0.35) * n, -1.0});
  } else if (kind == 3) {
    const double cx = c + uniform(rng, -0.08, 0.08) * n;
    const double cy = c + uniform(rng, -0.1, 0.0) * n;
    const double gap = uniform(rng, 0.04, 0.1) * n;
    poles.push_back({cx, cy - gap / 2, 1.0});
    poles.push_back({cx, cy + gap / 2, 1.0});
    poles.push_back({cx - uniform(rng, 0.25, 0.35) * n, cy + uniform(rng, 0.25, 0.35) * n, -1.0});
    poles.push_back({cx + uniform(rng, 0.25, 0.35) * n, cy + uniform(rng, 0.25, 0.35) * n, -1.0});
  }
  const double base = uniform(rng, -0.2, 0.2);
  const double arch = kind == 0 ? uniform(rng, 0.5, 0.9) : 0.0;
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) {
    waves.push_back({uniform(rng, -2.0, 2.0) * kPi / n, uniform(rng, -2.0, 2.0) * kPi / n, uniform(rng, 0.0, 2 * kPi),
                     uniform(rng, 0.05, 0.15)});
  }
  Grid<double> theta(n, n);
  for (int r = 0; r < n; ++r) {
    for (int col = 0; col < n; ++col) {
      double t = base;
      for (const auto& p : poles) t += 0.5 * p.sign * std::atan2(r - p.y, col - p.x);
      if (kind == 0) t += arch * std::atan(2.0 * (col - c) / n) * (r < c ? -1.0 : -0.6);
      for (const auto& w : waves) t += w.amp * std::sin(w.fx * col + w.fy * r + w.phase);
      t = std::fmod(t, kPi);
      if (t < 0) t += kPi;
      theta(r, col) = t;
    }
  }
  return theta;
}

}  // namespace detail

/// Renders the ridge pattern of finger `finger` under `seed` by iterated
/// oriented band-pass filtering of noise.
inline MasterFinger render_master(std::uint64_t seed, int finger, const SynthOptions& opt = {}) {
  auto rng = detail::synth_rng(seed, static_cast<std::uint64_t>(finger), 0x6d617374);
  const int n = opt.master_canvas;
  MasterFinger m;
  m.period = detail::uniform(rng, opt.min_period, opt.max_period);
  m.orientation = detail::master_orientation(rng, n);

  constexpr int kBins = 36;
  const double s = 0.4 * m.period;
  const int rad = static_cast<int>(std::ceil(2.5 * s));
  const int side = 2 * rad + 1;
  std::vector<std::vector<double>> kernels(kBins, std::vector<double>(static_cast<std::size_t>(side) * side));
  for (int b = 0; b < kBins; ++b) {
    const double t = kPi * b / kBins;
    const double nx = -std::sin(t), ny = std::cos(t);  // normal to the ridge direction
    double sum = 0.0;
    for (int dy = -rad; dy <= rad; ++dy)
      for (int dx = -rad; dx <= rad; ++dx) {
        const double v = std::exp(-(dx * dx + dy * dy) / (2 * s * s)) * std::cos(2 * kPi / m.period * (dx * nx + dy * ny));
        kernels[b][static_cast<std::size_t>((dy + rad) * side + dx + rad)] = v;
        sum += v;
      }
    for (double& v : kernels[b]) v -= sum / (side * side);
  }

  Grid<double> field(n, n);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (double& v : field.values()) v = noise(rng);
  Grid<int> bin(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) bin(r, c) = static_cast<int>(std::lround(m.orientation(r, c) / kPi * kBins)) % kBins;

  Grid<double> next(n, n);
  for (int it = 0; it < opt.iterations; ++it) {
    double peak = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const auto& k = kernels[bin(r, c)];
        double acc = 0.0;
        for (int dy = -rad; dy <= rad; ++dy) {
          const int rr = std::clamp(r + dy, 0, n - 1);
          const double* krow = k.data() + static_cast<std::size_t>(dy + rad) * side;
          for (int dx = -rad; dx <= rad; ++dx) acc += krow[dx + rad] * field(rr, std::clamp(c + dx, 0, n - 1));
        }
        next(r, c) = acc;
        peak = std::max(peak, std::abs(acc));
      }
    }
    const double g = peak > 0 ? 3.0 / peak : 0.0;
    for (std::size_t i = 0; i < field.values().size(); ++i) field.values()[i] = std::clamp(g * next.values()[i], -1.0, 1.0);
  }

  // Elliptical fingertip with a soft rim.
  const double cx = n / 2.0 + detail::uniform(rng, -4.0, 4.0);
  const double cy = n / 2.0 + detail::uniform(rng, -4.0, 4.0);
  const double ax = detail::uniform(rng, 0.26, 0.30) * n;
  const double ay = detail::uniform(rng, 0.32, 0.36) * n;
  m.ink = Grid<double>(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double e = std::hypot((c - cx) / ax, (r - cy) / ay);
      const double w = std::clamp((1.0 - e) * ax / 4.0, 0.0, 1.0);
      m.ink(r, c) = w * 0.5 * (1.0 + field(r, c));
    }
  }
  return m;
}

/// One impression of `master` as seen by `profile`: magnified, slightly
/// rotated and shifted, contrast-mapped, noisy and cropped. Intensities are
/// rounded to integers in [0, 255].
inline GrayImage render_impression(const MasterFinger& master, const SensorProfile& profile, std::uint64_t seed,
                                   int finger, int profile_index, int impression, const SynthOptions& opt = {}) {
  validate_profile(profile);
  auto rng = detail::synth_rng(seed, static_cast<std::uint64_t>(finger), 0x696d7072,
                               static_cast<std::uint64_t>(profile_index), static_cast<std::uint64_t>(impression));
  const double rot = radians(detail::uniform(rng, -profile.max_rotation_deg, profile.max_rotation_deg));
  const double sx = detail::uniform(rng, -profile.max_shift_px, profile.max_shift_px);
  const double sy = detail::uniform(rng, -profile.max_shift_px, profile.max_shift_px);
  const int n = opt.canvas;
  const int out_side = static_cast<int>(std::lround(n * (1.0 - profile.crop)));
  const int crop_x = std::uniform_int_distribution<int>(0, n - out_side)(rng);
  const int crop_y = std::uniform_int_distribution<int>(0, n - out_side)(rng);
  std::normal_distribution<double> noise(0.0, profile.noise_sigma);

  const Grid<double>& ink = master.ink;
  const double mc = ink.width() / 2.0;
  const double oc = n / 2.0;
  const double cr = std::cos(rot), sr = std::sin(rot);
  auto sample = [&](double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0, fy = y - y0;
    auto at = [&](int yy, int xx) { return ink.contains(yy, xx) ? ink(yy, xx) : 0.0; };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  };

  GrayImage img;
  img.pixels = Grid<double>(out_side, out_side);
  for (int r = 0; r < out_side; ++r) {
    for (int c = 0; c < out_side; ++c) {
      const double u = (c + crop_x - oc) / profile.scale;
      const double v = (r + crop_y - oc) / profile.scale;
      const double x = mc + cr * u - sr * v + sx;
      const double y = mc + sr * u + cr * v + sy;
      const double gray = 255.0 - 200.0 * sample(x, y);
      const double value = profile.gain * gray + profile.offset + noise(rng);
      img.pixels(r, c) = std::clamp(std::round(value), 0.0, 255.0);
    }
  }
  img.dpi = 500;
  return img;
}

}  // namespace cvf

#endif  // CROSSVFINGER_SYNTH_HPP
