#ifndef CROSSVFINGER_PIPELINE_HPP
#define CROSSVFINGER_PIPELINE_HPP

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crossvfinger/coror.hpp"
#include "crossvfinger/error.hpp"
#include "crossvfinger/fusion.hpp"
#include "crossvfinger/gaborhog.hpp"
#include "crossvfinger/hash.hpp"
#include "crossvfinger/orientation.hpp"
#include "crossvfinger/preprocess.hpp"

namespace cvf {

struct PipelineConfig {
  struct {
    int w = 17;
    double sigma = 3.0;
  } orientation;
  struct {
    std::vector<int> offsets = kDefaultOffsets;
    std::vector<Direction> directions = kDefaultDirections;
  } coror;
  struct {
    std::vector<double> wavelengths = GaborConfig{}.wavelengths;
    int bins = kDefaultHogBins;
    double sigma_ratio = GaborConfig{}.sigma_ratio;
  } gabor;
  struct {
    double epsilon = 1e-4;
    int max_k = 256;
    FusionMode fusion_mode = FusionMode::Concat;
    double variance_retained = 0.99;
  } cca;
  struct {
    double target_mean = 100.0;
    double target_variance = 100.0;
    int seg_block = 16;
    double seg_threshold = 100.0;
  } preprocessing;

  GaborConfig gabor_config() const {
    GaborConfig g;
    g.wavelengths = gabor.wavelengths;
    g.sigma_ratio = gabor.sigma_ratio;
    return g;
  }

  CcaOptions cca_options() const {
    return CcaOptions{cca.epsilon, cca.max_k, cca.variance_retained, cca.fusion_mode};
  }

  std::size_t coror_length() const { return cvf::coror_length(coror.offsets.size(), coror.directions.size()); }
  std::size_t gabor_hog_length() const { return cvf::gabor_hog_length(gabor.bins); }
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_list(std::string value) {
  value = trim(value);
  if (value.size() >= 2 && ((value.front() == '(' && value.back() == ')') ||
                            (value.front() == '[' && value.back() == ']'))) {
    value = value.substr(1, value.size() - 2);
  }
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

inline double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ValidationError, key + ": expected a number, got '" + text + "'");
  }
}

inline int to_int(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (v != static_cast<int>(v)) throw Error(ErrorCode::ValidationError, key + ": expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = {
      {"orientation.w", [](PipelineConfig& c, const std::string& v) { c.orientation.w = to_int("orientation.w", v); }},
      {"orientation.sigma",
       [](PipelineConfig& c, const std::string& v) { c.orientation.sigma = to_double("orientation.sigma", v); }},
      {"coror.offsets",
       [](PipelineConfig& c, const std::string& v) {
         c.coror.offsets.clear();
         for (const auto& item : split_list(v)) c.coror.offsets.push_back(to_int("coror.offsets", item));
       }},
      {"coror.directions",
       [](PipelineConfig& c, const std::string& v) {
         c.coror.directions.clear();
         for (const auto& item : split_list(v)) {
           try {
             c.coror.directions.push_back(direction_from_degrees(to_int("coror.directions", item)));
           } catch (const Error& e) {
             if (e.code() == ErrorCode::ValidationError) throw;
             throw Error(ErrorCode::ValidationError, "coror.directions: " + std::string(e.what()));
           }
         }
       }},
      {"gabor.wavelengths",
       [](PipelineConfig& c, const std::string& v) {
         c.gabor.wavelengths.clear();
         for (const auto& item : split_list(v)) c.gabor.wavelengths.push_back(to_double("gabor.wavelengths", item));
       }},
      {"gabor.bins", [](PipelineConfig& c, const std::string& v) { c.gabor.bins = to_int("gabor.bins", v); }},
      {"gabor.sigma_ratio",
       [](PipelineConfig& c, const std::string& v) { c.gabor.sigma_ratio = to_double("gabor.sigma_ratio", v); }},
      {"cca.epsilon", [](PipelineConfig& c, const std::string& v) { c.cca.epsilon = to_double("cca.epsilon", v); }},
      {"cca.max_k", [](PipelineConfig& c, const std::string& v) { c.cca.max_k = to_int("cca.max_k", v); }},
      {"cca.fusion_mode",
       [](PipelineConfig& c, const std::string& v) {
         try {
           c.cca.fusion_mode = fusion_mode_from_string(v);
         } catch (const Error&) {
           throw Error(ErrorCode::ValidationError, "cca.fusion_mode: expected concat or sum, got '" + v + "'");
         }
       }},
      {"cca.variance_retained",
       [](PipelineConfig& c, const std::string& v) {
         c.cca.variance_retained = to_double("cca.variance_retained", v);
       }},
      {"preprocessing.target_mean",
       [](PipelineConfig& c, const std::string& v) {
         c.preprocessing.target_mean = to_double("preprocessing.target_mean", v);
       }},
      {"preprocessing.target_variance",
       [](PipelineConfig& c, const std::string& v) {
         c.preprocessing.target_variance = to_double("preprocessing.target_variance", v);
       }},
      {"preprocessing.seg_block",
       [](PipelineConfig& c, const std::string& v) {
         c.preprocessing.seg_block = to_int("preprocessing.seg_block", v);
       }},
      {"preprocessing.seg_threshold",
       [](PipelineConfig& c, const std::string& v) {
         c.preprocessing.seg_threshold = to_double("preprocessing.seg_threshold", v);
       }},
  };
  return setters;
}

inline void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) throw Error(ErrorCode::ValidationError, key + ": " + why);
}

}  // namespace detail

/// Throws ValidationError naming the first offending key.
inline void validate(const PipelineConfig& c) {
  using detail::require;
  require(c.orientation.w >= 3 && c.orientation.w % 2 == 1, "orientation.w", "must be odd and >= 3");
  require(c.orientation.sigma > 0.0, "orientation.sigma", "must be > 0");
  require(!c.coror.offsets.empty(), "coror.offsets", "must not be empty");
  for (int d : c.coror.offsets) require(d >= 1, "coror.offsets", "every offset must be >= 1");
  require(!c.coror.directions.empty(), "coror.directions", "must not be empty");
  require(c.gabor.wavelengths.size() == kGaborScales, "gabor.wavelengths", "exactly 4 wavelengths required");
  for (double l : c.gabor.wavelengths) require(l > 0.0, "gabor.wavelengths", "every wavelength must be > 0");
  require(c.gabor.bins >= 1, "gabor.bins", "must be >= 1");
  require(c.gabor.sigma_ratio > 0.0, "gabor.sigma_ratio", "must be > 0");
  require(c.cca.epsilon >= 0.0, "cca.epsilon", "must be >= 0");
  require(c.cca.max_k >= 1, "cca.max_k", "must be >= 1");
  require(c.cca.variance_retained > 0.0 && c.cca.variance_retained <= 1.0, "cca.variance_retained",
          "must lie in (0, 1]");
  require(c.preprocessing.target_mean >= 0.0 && c.preprocessing.target_mean <= 255.0,
          "preprocessing.target_mean", "must lie in [0, 255]");
  require(c.preprocessing.target_variance > 0.0, "preprocessing.target_variance", "must be > 0");
  require(c.preprocessing.seg_block >= 1, "preprocessing.seg_block", "must be >= 1");
  require(c.preprocessing.seg_threshold >= 0.0, "preprocessing.seg_threshold", "must be >= 0");
}

/// Applies one "section.key = value" assignment.
inline void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value) {
  const auto& setters = detail::config_setters();
  const auto it = setters.find(detail::trim(key));
  if (it == setters.end()) throw Error(ErrorCode::ValidationError, "unknown key '" + detail::trim(key) + "'");
  it->second(config, detail::trim(value));
}

/// Parses the key-value config format: one `section.key = value` per line,
/// `#` starts a comment, lists are comma separated and may be wrapped in
/// () or []. Absent keys keep their defaults.
inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || detail::trim(line.substr(0, eq)).empty()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
  }
  validate(config);
  return config;
}

inline PipelineConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical text form; parse_config_text(to_text(c)) == c.
inline std::string to_text(const PipelineConfig& c) {
  auto join = [](const auto& items, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + fmt(items[i]);
    return s;
  };
  auto num = [](double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  };
  std::ostringstream out;
  out << "orientation.w = " << c.orientation.w << '\n'
      << "orientation.sigma = " << num(c.orientation.sigma) << '\n'
      << "coror.offsets = " << join(c.coror.offsets, [](int d) { return std::to_string(d); }) << '\n'
      << "coror.directions = "
      << join(c.coror.directions, [](Direction d) { return std::to_string(to_degrees(d)); }) << '\n'
      << "gabor.wavelengths = " << join(c.gabor.wavelengths, num) << '\n'
      << "gabor.bins = " << c.gabor.bins << '\n'
      << "gabor.sigma_ratio = " << num(c.gabor.sigma_ratio) << '\n'
      << "cca.epsilon = " << num(c.cca.epsilon) << '\n'
      << "cca.max_k = " << c.cca.max_k << '\n'
      << "cca.fusion_mode = " << to_string(c.cca.fusion_mode) << '\n'
      << "cca.variance_retained = " << num(c.cca.variance_retained) << '\n'
      << "preprocessing.target_mean = " << num(c.preprocessing.target_mean) << '\n'
      << "preprocessing.target_variance = " << num(c.preprocessing.target_variance) << '\n'
      << "preprocessing.seg_block = " << c.preprocessing.seg_block << '\n'
      << "preprocessing.seg_threshold = " << num(c.preprocessing.seg_threshold) << '\n';
  return out.str();
}

/// Intermediate products of one extraction, kept for debugging exports.
struct ExtractionTrace {
  GrayImage normalized;
  ForegroundMask mask;
  OrientationField orientation;  // smoothed, restricted to foreground
  double dominant = 0.0;
  QuantizedOrientationField quantized;
};

struct Features {
  CoRorDescriptor coror;
  GaborHogDescriptor gabor_hog;
};

/// Runs preprocessing and both descriptors with one fixed configuration.
class Extractor {
 public:
  explicit Extractor(PipelineConfig config = {})
      : config_((validate(config), std::move(config))),
        bank_(make_gabor_bank(config_.gabor_config())),
        config_hash_(fnv1a_hex(to_text(config_))) {}

  const PipelineConfig& config() const noexcept { return config_; }
  const GaborBank& bank() const noexcept { return bank_; }
  const std::string& config_hash() const noexcept { return config_hash_; }

  ExtractionTrace trace(const GrayImage& img) const {
    if (img.width() < kMinDescriptorSide || img.height() < kMinDescriptorSide) {
      throw Error(ErrorCode::ImageTooSmall, "descriptor extraction needs at least 64x64 pixels");
    }
    const auto& pre = config_.preprocessing;
    ExtractionTrace t;
    t.normalized = normalize(img, pre.target_mean, pre.target_variance);
    t.mask = segment(t.normalized, pre.seg_block, pre.seg_threshold);
    const OrientationField raw = estimate_orientation(compute_gradients(t.normalized), config_.orientation.w);
    t.orientation = smooth_orientation(restrict_to(raw, t.mask), config_.orientation.sigma);
    t.dominant = dominant_orientation(t.orientation);
    t.quantized = quantize(align_to_dominant(t.orientation, t.dominant));
    return t;
  }

  Features extract(const GrayImage& img) const {
    const ExtractionTrace t = trace(img);
    return Features{build_coror(t.quantized, config_.coror.offsets, config_.coror.directions),
                    build_gabor_hog(t.normalized, bank_, config_.gabor.bins)};
  }

 private:
  PipelineConfig config_;
  GaborBank bank_;
  std::string config_hash_;
};

inline Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Builds the CCA training matrices from extracted features.
inline DescriptorPairSet make_pair_set(const std::vector<Features>& features, std::vector<std::string> ids = {}) {
  if (features.empty()) throw Error(ErrorCode::TooFewSamples, "no training descriptors");
  const auto n = static_cast<Eigen::Index>(features.size());
  DescriptorPairSet set;
  set.x.resize(static_cast<Eigen::Index>(features.front().coror.values.size()), n);
  set.y.resize(static_cast<Eigen::Index>(features.front().gabor_hog.values.size()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& f = features[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(f.coror.values.size()) != set.x.rows() ||
        static_cast<Eigen::Index>(f.gabor_hog.values.size()) != set.y.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "training descriptors differ in length");
    }
    set.x.col(j) = as_vector(f.coror.values);
    set.y.col(j) = as_vector(f.gabor_hog.values);
  }
  set.ids = std::move(ids);
  return set;
}

inline Eigen::VectorXd fuse(const CcaModel& model, const Features& f) {
  return project_fuse(model, as_vector(f.coror.values), as_vector(f.gabor_hog.values));
}

}  // namespace cvf

#endif  // CROSSVFINGER_PIPELINE_HPP
