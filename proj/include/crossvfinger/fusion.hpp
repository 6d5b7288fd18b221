#ifndef CROSSVFINGER_FUSION_HPP
#define CROSSVFINGER_FUSION_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "crossvfinger/error.hpp"
#include "crossvfinger/hash.hpp"

namespace cvf {

enum class FusionMode { Concat, Sum };

inline std::string to_string(FusionMode mode) { return mode == FusionMode::Concat ? "concat" : "sum"; }

inline FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "concat") return FusionMode::Concat;
  if (s == "sum") return FusionMode::Sum;
  throw Error(ErrorCode::InvalidConfig, "fusion mode must be 'concat' or 'sum', got '" + s + "'");
}

/// Paired training descriptors; column j of x and of y come from the same
/// fingerprint.
struct DescriptorPairSet {
  Eigen::MatrixXd x;  // p x n
  Eigen::MatrixXd y;  // q x n
  std::vector<std::string> ids;

  Eigen::Index samples() const { return x.cols(); }
};

struct CcaOptions {
  double epsilon = 1e-4;          // ridge, scaled by trace(S)/dim
  int max_k = 256;
  double variance_retained = 0.99;  // for the rank-reducing pre-projection
  FusionMode fusion_mode = FusionMode::Concat;
};

inline constexpr double kMinCanonicalCorrelation = 1e-8;

struct CcaModel {
  Eigen::VectorXd mean_x;
  Eigen::VectorXd mean_y;
  Eigen::MatrixXd pca_x;  // p x p' orthonormal, or empty when not reduced
  Eigen::MatrixXd pca_y;
  Eigen::MatrixXd wx;  // p' x k
  Eigen::MatrixXd wy;  // q' x k
  Eigen::VectorXd lambdas;
  double epsilon = 0.0;
  FusionMode fusion_mode = FusionMode::Concat;

  Eigen::Index p() const { return mean_x.size(); }
  Eigen::Index q() const { return mean_y.size(); }
  Eigen::Index k() const { return lambdas.size(); }
  Eigen::Index fused_length() const { return fusion_mode == FusionMode::Concat ? 2 * k() : k(); }

  Eigen::VectorXd reduce_x(const Eigen::VectorXd& x) const {
    return pca_x.size() ? Eigen::VectorXd(pca_x.transpose() * (x - mean_x)) : Eigen::VectorXd(x - mean_x);
  }
  Eigen::VectorXd reduce_y(const Eigen::VectorXd& y) const {
    return pca_y.size() ? Eigen::VectorXd(pca_y.transpose() * (y - mean_y)) : Eigen::VectorXd(y - mean_y);
  }
};

namespace detail {

// Orthonormal basis spanning the leading principal directions of the
// centered columns: at least `retained` of the variance, at most n-1 dims.
inline Eigen::MatrixXd reduction_basis(const Eigen::MatrixXd& centered, double retained) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  const double total = s.squaredNorm();
  const Eigen::Index cap = centered.cols() - 1;
  Eigen::Index keep = 0;
  double acc = 0.0;
  while (keep < s.size() && keep < cap && s(keep) > s(0) * 1e-10) {
    acc += s(keep) * s(keep);
    ++keep;
    if (acc >= retained * total) break;
  }
  if (keep == 0) throw Error(ErrorCode::NumericalFailure, "descriptor set has zero variance");
  Eigen::MatrixXd basis = svd.matrixU().leftCols(keep);
  for (Eigen::Index j = 0; j < keep; ++j) {
    Eigen::Index at = 0;
    basis.col(j).cwiseAbs().maxCoeff(&at);
    if (basis(at, j) < 0.0) basis.col(j) *= -1.0;
  }
  return basis;
}

inline Eigen::MatrixXd regularize(Eigen::MatrixXd s, double epsilon) {
  const double ridge = epsilon * s.trace() / static_cast<double>(s.rows());
  s.diagonal().array() += ridge;
  return s;
}

}  // namespace detail

/// Regularized CCA. Within-set covariances get a ridge of
/// epsilon * trace(S) / dim; a set with more features than n-1 is first
/// projected onto its principal subspace. The coupled eigenproblems
///   Sxx^-1 Sxy Syy^-1 Syx wx = λ² wx,  Syy^-1 Syx Sxx^-1 Sxy wy = λ² wy
/// are solved through the Cholesky factor Sxx = L Lᵀ, which turns the first
/// into the symmetric problem L^-1 Sxy Syy^-1 Syx L^-ᵀ u = λ² u with
/// wx = L^-ᵀ u; wy = Syy^-1 Syx wx / λ. Both satisfy Wᵀ S W = I.
inline CcaModel fit_cca(const DescriptorPairSet& pairs, const CcaOptions& options = {}) {
  const Eigen::Index n = pairs.samples();
  if (pairs.y.cols() != n) throw Error(ErrorCode::DimensionMismatch, "X and Y sample counts differ");
  if (n < 3) throw Error(ErrorCode::TooFewSamples, "CCA needs at least 3 samples");
  if (!(options.epsilon >= 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0");
  if (options.max_k < 1) throw Error(ErrorCode::InvalidConfig, "max_k must be >= 1");
  if (!pairs.x.allFinite() || !pairs.y.allFinite()) {
    throw Error(ErrorCode::NumericalFailure, "training descriptors contain non-finite values");
  }

  CcaModel model;
  model.epsilon = options.epsilon;
  model.fusion_mode = options.fusion_mode;
  model.mean_x = pairs.x.rowwise().mean();
  model.mean_y = pairs.y.rowwise().mean();
  Eigen::MatrixXd xc = pairs.x.colwise() - model.mean_x;
  Eigen::MatrixXd yc = pairs.y.colwise() - model.mean_y;
  if (xc.rows() > n - 1) {
    model.pca_x = detail::reduction_basis(xc, options.variance_retained);
    xc = model.pca_x.transpose() * xc;
  }
  if (yc.rows() > n - 1) {
    model.pca_y = detail::reduction_basis(yc, options.variance_retained);
    yc = model.pca_y.transpose() * yc;
  }

  const double denom = static_cast<double>(n - 1);
  const Eigen::MatrixXd sxx = detail::regularize(xc * xc.transpose() / denom, options.epsilon);
  const Eigen::MatrixXd syy = detail::regularize(yc * yc.transpose() / denom, options.epsilon);
  const Eigen::MatrixXd sxy = xc * yc.transpose() / denom;

  const Eigen::LLT<Eigen::MatrixXd> llt_x(sxx);
  const Eigen::LLT<Eigen::MatrixXd> llt_y(syy);
  if (llt_x.info() != Eigen::Success || llt_y.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "within-set covariance is not positive definite");
  }
  const Eigen::MatrixXd syy_inv_syx = llt_y.solve(sxy.transpose());
  const Eigen::MatrixXd a = sxy * syy_inv_syx;
  const auto lx = llt_x.matrixL();
  const Eigen::MatrixXd b = lx.solve(a);
  Eigen::MatrixXd m = lx.solve(b.transpose());
  m = 0.5 * (m + m.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigensolver did not converge");

  const Eigen::Index dim = m.rows();
  const Eigen::Index cap = std::min({n - 1, xc.rows(), yc.rows(), static_cast<Eigen::Index>(options.max_k)});
  std::vector<double> lambdas;
  for (Eigen::Index i = dim - 1; i >= 0 && static_cast<Eigen::Index>(lambdas.size()) < cap; --i) {
    const double l = std::sqrt(std::max(0.0, eig.eigenvalues()(i)));
    if (l <= kMinCanonicalCorrelation) break;
    lambdas.push_back(l);
  }
  const auto k = static_cast<Eigen::Index>(lambdas.size());
  if (k == 0) throw Error(ErrorCode::NumericalFailure, "no canonical correlation above 1e-8");

  model.lambdas = Eigen::Map<const Eigen::VectorXd>(lambdas.data(), k);
  const Eigen::MatrixXd u = eig.eigenvectors().rightCols(k).rowwise().reverse();
  model.wx = lx.transpose().solve(u);
  model.wy = syy_inv_syx * model.wx * model.lambdas.cwiseInverse().asDiagonal();
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index at = 0;
    model.wx.col(j).cwiseAbs().maxCoeff(&at);
    if (model.wx(at, j) < 0.0) {
      model.wx.col(j) *= -1.0;
      model.wy.col(j) *= -1.0;
    }
  }
  return model;
}

/// Canonical variates of one descriptor pair: [x*; y*] (concat) or x* + y* (sum).
inline Eigen::VectorXd project_fuse(const CcaModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != model.p() || y.size() != model.q()) {
    throw Error(ErrorCode::DimensionMismatch, "descriptor sizes (" + std::to_string(x.size()) + ", " +
                                                  std::to_string(y.size()) + ") do not match the model (" +
                                                  std::to_string(model.p()) + ", " + std::to_string(model.q()) + ")");
  }
  const Eigen::VectorXd xs = model.wx.transpose() * model.reduce_x(x);
  const Eigen::VectorXd ys = model.wy.transpose() * model.reduce_y(y);
  if (model.fusion_mode == FusionMode::Sum) return xs + ys;
  Eigen::VectorXd z(2 * model.k());
  z << xs, ys;
  return z;
}

inline constexpr int kModelVersion = 1;

namespace detail {

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

inline double get_f64(const char* p) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

/// Model bytes: one JSON header line, then the matrices it lists, each
/// column-major little-endian float64.
inline std::string serialize_model(const CcaModel& model) {
  nlohmann::json header = {
      {"version", kModelVersion},
      {"p", model.p()},
      {"q", model.q()},
      {"k", model.k()},
      {"epsilon", model.epsilon},
      {"fusion_mode", to_string(model.fusion_mode)},
  };
  const Eigen::MatrixXd mean_x = model.mean_x, mean_y = model.mean_y, lambdas = model.lambdas;
  const std::vector<std::pair<std::string, const Eigen::MatrixXd*>> order = {
      {"mean_x", &mean_x}, {"mean_y", &mean_y}, {"pca_x", &model.pca_x}, {"pca_y", &model.pca_y},
      {"wx", &model.wx},   {"wy", &model.wy},   {"lambdas", &lambdas}};
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& [name, m] : order) listing.push_back({name, m->rows(), m->cols()});
  header["matrices"] = listing;
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& [name, m] : order)
    for (Eigen::Index i = 0; i < m->size(); ++i) detail::put_f64(out, m->data()[i]);
  return out;
}

inline CcaModel deserialize_model(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw Error(ErrorCode::CorruptModel, "missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, eol));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("bad header: ") + e.what());
  }
  CcaModel model;
  try {
    if (header.at("version").get<int>() != kModelVersion) {
      throw Error(ErrorCode::VersionMismatch, "model version " + header.at("version").dump() +
                                                  ", expected " + std::to_string(kModelVersion));
    }
    model.epsilon = header.at("epsilon").get<double>();
    model.fusion_mode = fusion_mode_from_string(header.at("fusion_mode").get<std::string>());
    std::size_t pos = eol + 1;
    auto read = [&](const nlohmann::json& entry) {
      const auto rows = entry.at(1).get<Eigen::Index>();
      const auto cols = entry.at(2).get<Eigen::Index>();
      if (rows < 0 || cols < 0) throw Error(ErrorCode::CorruptModel, "negative matrix shape");
      const auto count = static_cast<std::size_t>(rows * cols);
      if (bytes.size() - pos < count * 8) throw Error(ErrorCode::CorruptModel, "truncated model file");
      Eigen::MatrixXd m(rows, cols);
      for (std::size_t i = 0; i < count; ++i) m.data()[i] = detail::get_f64(bytes.data() + pos + 8 * i);
      pos += count * 8;
      return m;
    };
    const auto& listing = header.at("matrices");
    if (listing.size() != 7) throw Error(ErrorCode::CorruptModel, "unexpected matrix listing");
    model.mean_x = read(listing.at(0));
    model.mean_y = read(listing.at(1));
    model.pca_x = read(listing.at(2));
    model.pca_y = read(listing.at(3));
    model.wx = read(listing.at(4));
    model.wy = read(listing.at(5));
    model.lambdas = read(listing.at(6));
    if (pos != bytes.size()) throw Error(ErrorCode::CorruptModel, "trailing bytes after matrices");
    if (model.p() != header.at("p").get<Eigen::Index>() || model.q() != header.at("q").get<Eigen::Index>() ||
        model.k() != header.at("k").get<Eigen::Index>() || model.wx.cols() != model.k() ||
        model.wy.cols() != model.k()) {
      throw Error(ErrorCode::CorruptModel, "matrix shapes disagree with header");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("bad header: ") + e.what());
  }
  return model;
}

/// Identity of a model for template binding: FNV-1a of its serialized bytes.
inline std::string model_hash(const CcaModel& model) { return fnv1a_hex(serialize_model(model)); }

inline void save_model(const CcaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IOFailure, "short write " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CcaModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace cvf

#endif  // CROSSVFINGER_FUSION_HPP
