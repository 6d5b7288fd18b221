// Test helpers and independent reference implementations.
#ifndef CROSSVFINGER_TESTS_SUPPORT_HPP
#define CROSSVFINGER_TESTS_SUPPORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unistd.h>

#include "crossvfinger/coror.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/orientation.hpp"

namespace cvf::testing {

namespace fs = std::filesystem;

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("cvf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Random quantized field with bins in 1..8 and a random validity mask.
inline QuantizedOrientationField random_field(std::mt19937_64& rng, int w, int h, double valid_prob) {
  QuantizedOrientationField f;
  f.bins = Grid<std::uint8_t>(w, h);
  f.valid = Mask(w, h);
  std::uniform_int_distribution<int> bin(1, 8);
  std::bernoulli_distribution valid(valid_prob);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      f.bins(r, c) = static_cast<std::uint8_t>(bin(rng));
      f.valid(r, c) = valid(rng) ? 1 : 0;
    }
  return f;
}

/// Co-occurrence by enumerating every ordered pixel pair of the frame and
/// keeping those whose coordinate difference is the requested vector.
inline std::array<std::array<std::uint64_t, 8>, 8> brute_force_cooccurrence(const QuantizedOrientationField& f, int d,
                                                                            int phi_degrees) {
  // (drow, dcol) for each direction, rows growing downward.
  int dr = 0, dc = 0;
  switch (phi_degrees) {
    case 0: dr = 0, dc = d; break;
    case 45: dr = -d, dc = d; break;
    case 90: dr = -d, dc = 0; break;
    case 135: dr = -d, dc = -d; break;
    default: break;
  }
  std::array<std::array<std::uint64_t, 8>, 8> counts{};
  const int w = f.bins.width(), h = f.bins.height();
  const int n = w * h;
  for (int p = 0; p < n; ++p) {
    const int pr = p / w, pc = p % w;
    if (!f.valid(pr, pc)) continue;
    for (int q = 0; q < n; ++q) {
      const int qr = q / w, qc = q % w;
      if (qr - pr != dr || qc - pc != dc || !f.valid(qr, qc)) continue;
      ++counts[f.bins(pr, pc) - 1][f.bins(qr, qc) - 1];
    }
  }
  return counts;
}

/// Reference CCA: whiten both sets with the inverse symmetric square roots
/// of their regularized covariances, then take the SVD of the whitened
/// cross-covariance. Columns of x, y are samples.
struct CcaOracle {
  Eigen::VectorXd correlations;
  Eigen::MatrixXd wx, wy;
};

inline Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

inline CcaOracle cca_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double epsilon) {
  const double n = static_cast<double>(x.cols());
  const Eigen::MatrixXd xc = x.colwise() - x.rowwise().mean();
  const Eigen::MatrixXd yc = y.colwise() - y.rowwise().mean();
  Eigen::MatrixXd sxx = xc * xc.transpose() / (n - 1);
  Eigen::MatrixXd syy = yc * yc.transpose() / (n - 1);
  const Eigen::MatrixXd sxy = xc * yc.transpose() / (n - 1);
  sxx += epsilon * sxx.trace() / static_cast<double>(sxx.rows()) * Eigen::MatrixXd::Identity(sxx.rows(), sxx.cols());
  syy += epsilon * syy.trace() / static_cast<double>(syy.rows()) * Eigen::MatrixXd::Identity(syy.rows(), syy.cols());
  const Eigen::MatrixXd ix = inverse_sqrt(sxx), iy = inverse_sqrt(syy);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ix * sxy * iy, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.singularValues(), ix * svd.matrixU(), iy * svd.matrixV()};
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean();
  const Eigen::VectorXd bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

struct SweepResult {
  double eer;
  double threshold;
};

/// EER by trying every distinct score as the threshold and keeping the one
/// with the smallest |FMR - FNMR|; EER is the mean of the two rates there.
inline SweepResult exhaustive_eer(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  std::vector<double> all = genuine;
  all.insert(all.end(), impostor.begin(), impostor.end());
  SweepResult best{1.0, 0.0};
  double best_gap = 2.0;
  for (double t : all) {
    double fm = 0, fnm = 0;
    for (double s : impostor) fm += s <= t;
    for (double s : genuine) fnm += s > t;
    fm /= static_cast<double>(impostor.size());
    fnm /= static_cast<double>(genuine.size());
    if (std::abs(fm - fnm) < best_gap) {
      best_gap = std::abs(fm - fnm);
      best = {(fm + fnm) / 2, t};
    }
  }
  return best;
}

/// Ridge period of a roughly isotropic ridge texture: first peak of the
/// radially averaged autocorrelation of a centered window. For locally
/// parallel ridges of period T and random orientation this peak sits at a
/// fixed multiple of T, so ratios of measurements are ratios of periods.
inline double autocorrelation_period(const Grid<double>& img, int window, int max_lag) {
  const int r0 = (img.height() - window) / 2, c0 = (img.width() - window) / 2;
  double mean = 0;
  for (int r = 0; r < window; ++r)
    for (int c = 0; c < window; ++c) mean += img(r0 + r, c0 + c);
  mean /= window * window;
  std::vector<double> sum(static_cast<std::size_t>(max_lag) + 2, 0.0), count(sum.size(), 0.0);
  for (int dy = -max_lag; dy <= max_lag; ++dy) {
    for (int dx = -max_lag; dx <= max_lag; ++dx) {
      const double rad = std::hypot(dx, dy);
      const int ring = static_cast<int>(std::lround(rad));
      if (ring > max_lag) continue;
      double acc = 0;
      int pairs = 0;
      for (int r = std::max(0, -dy); r < std::min(window, window - dy); ++r)
        for (int c = std::max(0, -dx); c < std::min(window, window - dx); ++c) {
          acc += (img(r0 + r, c0 + c) - mean) * (img(r0 + r + dy, c0 + c + dx) - mean);
          ++pairs;
        }
      sum[ring] += acc / pairs;
      count[ring] += 1;
    }
  }
  std::vector<double> profile(static_cast<std::size_t>(max_lag) + 1);
  for (int i = 0; i <= max_lag; ++i) profile[i] = sum[i] / count[i];
  int i = 1;
  while (i < max_lag && profile[i + 1] < profile[i]) ++i;  // descend to the first minimum
  while (i < max_lag && profile[i + 1] >= profile[i]) ++i;  // climb to the next maximum
  if (i <= 0 || i >= max_lag) return static_cast<double>(i);
  const double a = profile[i - 1], b = profile[i], c = profile[i + 1];
  const double denom = a - 2 * b + c;
  return denom == 0 ? i : i + 0.5 * (a - c) / denom;
}

/// Full 2-D correlation of `img` with `kernel` (odd square), reflect-101 border.
inline Grid<double> direct_correlation(const Grid<double>& img, const Grid<double>& kernel) {
  const int r = kernel.width() / 2;
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
    return i;
  };
  Grid<double> out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j)
          acc += kernel(i + r, j + r) * img(reflect(y + i, img.height()), reflect(x + j, img.width()));
      out(y, x) = acc;
    }
  return out;
}

/// Sinusoidal grating whose intensity varies along direction `angle`
/// (radians from the +x axis, y growing downward) with the given period.
inline GrayImage grating(int w, int h, double period, double angle, double amplitude = 60.0, double mean = 128.0) {
  GrayImage img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img(r, c) = mean + amplitude * std::cos(2 * kPi / period * (c * std::cos(angle) + r * std::sin(angle)));
  return img;
}

}  // namespace cvf::testing

#endif  // CROSSVFINGER_TESTS_SUPPORT_HPP
