#ifndef CROSSVFINGER_EVAL_HPP
#define CROSSVFINGER_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossvfinger/error.hpp"
#include "crossvfinger/fusion.hpp"
#include "crossvfinger/image.hpp"
#include "crossvfinger/matcher.hpp"
#include "crossvfinger/parallel.hpp"
#include "crossvfinger/pipeline.hpp"
#include "crossvfinger/synth.hpp"

namespace cvf {

namespace fs = std::filesystem;

/// Parsed `<subject>_<finger>_<impression>` file stem.
struct SampleId {
  std::string subject;
  std::string finger;
  std::string impression;

  /// Same finger of the same subject: the genuine-pair key.
  std::string identity() const { return subject + "_" + finger; }
};

/// Splits from the right, so subject ids may themselves contain '_'.
inline std::optional<SampleId> parse_sample_name(const std::string& stem) {
  const auto last = stem.rfind('_');
  if (last == std::string::npos || last == 0) return std::nullopt;
  const auto mid = stem.rfind('_', last - 1);
  if (mid == std::string::npos || mid == 0) return std::nullopt;
  SampleId id{stem.substr(0, mid), stem.substr(mid + 1, last - mid - 1), stem.substr(last + 1)};
  if (id.subject.empty() || id.finger.empty() || id.impression.empty()) return std::nullopt;
  return id;
}

struct DatasetEntry {
  fs::path path;
  SampleId id;
};

inline bool is_image_path(const fs::path& p) {
  std::string ext = p.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".pgm";
}

/// Image files of one sensor directory following the naming scheme, sorted
/// by file name. Other files are ignored.
inline std::vector<DatasetEntry> scan_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::FileNotFound, "dataset directory " + dir.string());
  std::vector<DatasetEntry> entries;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file() || !is_image_path(item.path())) continue;
    if (auto id = parse_sample_name(item.path().stem().string())) entries.push_back({item.path(), *id});
  }
  if (entries.empty()) throw Error(ErrorCode::EmptyDataset, "no <subject>_<finger>_<impression> images in " + dir.string());
  std::ranges::sort(entries, {}, [](const DatasetEntry& e) { return e.path.filename().string(); });
  return entries;
}

/// Extracts descriptors of every entry, in parallel across images.
inline std::vector<Features> extract_all(const std::vector<DatasetEntry>& entries, const Extractor& extractor) {
  std::vector<Features> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) { out[i] = extractor.extract(load_image(entries[i].path)); });
  return out;
}

struct DatasetRef {
  std::string tag;
  fs::path dir;
};

struct ProtocolSpec {
  DatasetRef gallery;
  DatasetRef probe;
  std::size_t impostor_cap = 0;  // 0 keeps every impostor comparison
  std::uint64_t seed = 0;
};

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

namespace detail {

inline bool same_directory(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  const bool eq = fs::equivalent(a, b, ec);
  return !ec && eq;
}

}  // namespace detail

/// Scores fused vectors: each probe against each gallery identity (minimum
/// over that identity's templates). With `exclude_self`, probe i never
/// meets gallery template i, so an identity whose only template is the
/// probe itself is skipped.
inline ScoreSet score_protocol(const std::vector<DatasetEntry>& gallery, const std::vector<std::vector<double>>& gallery_fused,
                               const std::vector<DatasetEntry>& probe, const std::vector<std::vector<double>>& probe_fused,
                               bool exclude_self, std::size_t impostor_cap, std::uint64_t seed) {
  std::vector<std::string> identities;
  std::map<std::string, std::vector<std::size_t>> templates;
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    auto [it, inserted] = templates.try_emplace(gallery[g].id.identity());
    if (inserted) identities.push_back(gallery[g].id.identity());
    it->second.push_back(g);
  }

  struct Pair {
    std::size_t probe;
    std::size_t identity;
  };
  std::vector<Pair> genuine_pairs, impostor_pairs;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t k = 0; k < identities.size(); ++k) {
      const auto& ts = templates.at(identities[k]);
      const bool only_self = exclude_self && ts.size() == 1 && ts.front() == p;
      if (only_self) continue;
      (identities[k] == probe[p].id.identity() ? genuine_pairs : impostor_pairs).push_back({p, k});
    }
  }
  if (impostor_cap > 0 && impostor_pairs.size() > impostor_cap) {
    std::vector<Pair> kept;
    kept.reserve(impostor_cap);
    std::mt19937_64 rng(seed);
    std::sample(impostor_pairs.begin(), impostor_pairs.end(), std::back_inserter(kept), impostor_cap, rng);
    impostor_pairs = std::move(kept);
  }

  auto score = [&](const Pair& pr) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g : templates.at(identities[pr.identity])) {
      if (exclude_self && g == pr.probe) continue;
      best = std::min(best, cityblock(probe_fused[pr.probe], gallery_fused[g]));
    }
    return best;
  };
  ScoreSet set;
  set.genuine.resize(genuine_pairs.size());
  set.impostor.resize(impostor_pairs.size());
  parallel_for(genuine_pairs.size(), [&](std::size_t i) { set.genuine[i] = score(genuine_pairs[i]); });
  parallel_for(impostor_pairs.size(), [&](std::size_t i) { set.impostor[i] = score(impostor_pairs[i]); });
  return set;
}

inline std::vector<std::vector<double>> fuse_all(const CcaModel& model, const std::vector<Features>& features) {
  std::vector<std::vector<double>> out(features.size());
  parallel_for(features.size(), [&](std::size_t i) {
    const Eigen::VectorXd z = fuse(model, features[i]);
    out[i].assign(z.data(), z.data() + z.size());
  });
  return out;
}

/// Genuine and impostor scores of `spec` under `model`.
inline ScoreSet run_protocol(const ProtocolSpec& spec, const CcaModel& model, const PipelineConfig& config) {
  const Extractor extractor(config);
  if (static_cast<std::size_t>(model.p()) != config.coror_length() ||
      static_cast<std::size_t>(model.q()) != config.gabor_hog_length()) {
    throw Error(ErrorCode::ModelMismatch, "model dimensions do not match the descriptor configuration");
  }
  const auto gallery = scan_dataset(spec.gallery.dir);
  const bool same = detail::same_directory(spec.gallery.dir, spec.probe.dir);
  const auto probe = same ? gallery : scan_dataset(spec.probe.dir);
  const auto gallery_fused = fuse_all(model, extract_all(gallery, extractor));
  const auto probe_fused = same ? gallery_fused : fuse_all(model, extract_all(probe, extractor));
  return score_protocol(gallery, gallery_fused, probe, probe_fused, same, spec.impostor_cap, spec.seed);
}

struct DetPoint {
  double threshold = 0.0;
  double fmr = 0.0;
  double fnmr = 0.0;
};

struct Metrics {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double fmr100 = 0.0;
  double fmr1000 = 0.0;
  double zero_fmr = 0.0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
  std::vector<DetPoint> det;  // ascending threshold
};

/// Threshold sweep over the sorted distinct scores, accept iff distance <= t.
/// The sweep starts from an implicit reject-all point (FMR 0, FNMR 1). EER
/// is the linearly interpolated crossing of FMR and FNMR.
inline Metrics compute_metrics(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.impostor.empty()) {
    throw Error(ErrorCode::EmptyScores, "metrics need genuine and impostor scores");
  }
  for (const auto* list : {&scores.genuine, &scores.impostor})
    for (double s : *list)
      if (!std::isfinite(s)) throw Error(ErrorCode::EmptyScores, "scores must be finite");

  std::vector<double> gen = scores.genuine, imp = scores.impostor;
  std::ranges::sort(gen);
  std::ranges::sort(imp);
  std::vector<double> thresholds;
  thresholds.reserve(gen.size() + imp.size());
  std::ranges::merge(gen, imp, std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  Metrics m;
  m.n_genuine = gen.size();
  m.n_impostor = imp.size();
  m.det.reserve(thresholds.size());
  std::size_t gi = 0, ii = 0;
  for (double t : thresholds) {
    while (gi < gen.size() && gen[gi] <= t) ++gi;
    while (ii < imp.size() && imp[ii] <= t) ++ii;
    m.det.push_back({t, static_cast<double>(ii) / ni, static_cast<double>(gen.size() - gi) / ng});
  }

  DetPoint prev{thresholds.front(), 0.0, 1.0};
  bool found = false;
  for (const DetPoint& p : m.det) {
    const double d = p.fmr - p.fnmr;
    if (d >= 0.0) {
      const double d0 = prev.fmr - prev.fnmr;
      const double a = d == d0 ? 1.0 : -d0 / (d - d0);
      m.eer = prev.fmr + a * (p.fmr - prev.fmr);
      m.eer_threshold = prev.threshold + a * (p.threshold - prev.threshold);
      found = true;
      break;
    }
    prev = p;
  }
  if (!found) m.eer = 0.0;  // unreachable: the last point has FMR 1, FNMR 0

  auto best_fnmr = [&](double max_fmr) {
    double best = 1.0;
    for (const DetPoint& p : m.det)
      if (p.fmr <= max_fmr) best = std::min(best, p.fnmr);
    return best;
  };
  m.fmr100 = best_fnmr(0.01);
  m.fmr1000 = best_fnmr(0.001);
  m.zero_fmr = best_fnmr(0.0);
  return m;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
}

}  // namespace detail

inline nlohmann::json to_json(const Metrics& m) {
  return {{"eer", m.eer},         {"eer_threshold", m.eer_threshold}, {"fmr100", m.fmr100},
          {"fmr1000", m.fmr1000}, {"zero_fmr", m.zero_fmr},           {"n_genuine", m.n_genuine},
          {"n_impostor", m.n_impostor}};
}

/// Writes metrics.json, scores.csv (label,score) and det.csv
/// (threshold,fmr,fnmr) into `dir`, creating it when missing.
inline void emit_report(const Metrics& metrics, const ScoreSet& scores, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot create " + dir.string() + ": " + ec.message());
  detail::write_text(dir / "metrics.json", to_json(metrics).dump(2) + "\n");
  std::string csv = "label,score\n";
  for (double s : scores.genuine) csv += "genuine," + detail::format_real(s) + "\n";
  for (double s : scores.impostor) csv += "impostor," + detail::format_real(s) + "\n";
  detail::write_text(dir / "scores.csv", csv);
  std::string det = "threshold,fmr,fnmr\n";
  for (const DetPoint& p : metrics.det) {
    det += detail::format_real(p.threshold) + "," + detail::format_real(p.fmr) + "," + detail::format_real(p.fnmr) + "\n";
  }
  detail::write_text(dir / "det.csv", det);
}

inline ScoreSet read_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  std::string line;
  if (!std::getline(in, line) || line != "label,score") throw Error(ErrorCode::ParseError, "scores.csv header missing");
  ScoreSet set;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::ParseError, "scores.csv line " + std::to_string(row));
    const std::string label = line.substr(0, comma);
    double value = 0.0;
    try {
      value = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "scores.csv line " + std::to_string(row));
    }
    if (label == "genuine") {
      set.genuine.push_back(value);
    } else if (label == "impostor") {
      set.impostor.push_back(value);
    } else {
      throw Error(ErrorCode::ParseError, "scores.csv line " + std::to_string(row) + ": label '" + label + "'");
    }
  }
  return set;
}

/// Writes `<out>/<sensor>/<subject>_1_<impression>.png` for every finger,
/// profile and impression. Subjects are zero-padded finger indices.
inline std::vector<fs::path> generate_synthetic_corpus(std::uint64_t seed, int n_fingers, int impressions_per_sensor,
                                                       const std::vector<SensorProfile>& profiles, const fs::path& out,
                                                       const SynthOptions& options = {}) {
  if (n_fingers < 2) throw Error(ErrorCode::InvalidConfig, "synthetic corpus needs at least 2 fingers");
  if (impressions_per_sensor < 1) throw Error(ErrorCode::InvalidConfig, "need at least 1 impression per sensor");
  if (profiles.size() < 2) throw Error(ErrorCode::InvalidProfile, "need at least 2 sensor profiles");
  for (const auto& p : profiles) validate_profile(p);
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t j = i + 1; j < profiles.size(); ++j)
      if (profiles[i].name == profiles[j].name) throw Error(ErrorCode::InvalidProfile, "duplicate profile " + profiles[i].name);

  for (const auto& p : profiles) {
    std::error_code ec;
    fs::create_directories(out / p.name, ec);
    if (ec) throw Error(ErrorCode::IOFailure, "cannot create " + (out / p.name).string());
  }
  const std::size_t per_finger = profiles.size() * static_cast<std::size_t>(impressions_per_sensor);
  std::vector<fs::path> written(static_cast<std::size_t>(n_fingers) * per_finger);
  parallel_for(static_cast<std::size_t>(n_fingers), [&](std::size_t f) {
    const int finger = static_cast<int>(f);
    const MasterFinger master = render_master(seed, finger, options);
    char subject[16];
    std::snprintf(subject, sizeof subject, "%03d", finger + 1);
    for (std::size_t s = 0; s < profiles.size(); ++s) {
      for (int k = 0; k < impressions_per_sensor; ++k) {
        const GrayImage img = render_impression(master, profiles[s], seed, finger, static_cast<int>(s), k, options);
        const fs::path path = out / profiles[s].name / (std::string(subject) + "_1_" + std::to_string(k + 1) + ".png");
        save_png(img, path);
        written[f * per_finger + s * static_cast<std::size_t>(impressions_per_sensor) + static_cast<std::size_t>(k)] = path;
      }
    }
  });
  return written;
}

}  // namespace cvf

#endif  // CROSSVFINGER_EVAL_HPP
