#ifndef CROSSVFINGER_MATCHER_HPP
#define CROSSVFINGER_MATCHER_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "crossvfinger/error.hpp"
#include "crossvfinger/fusion.hpp"
#include "crossvfinger/hash.hpp"
#include "crossvfinger/pipeline.hpp"

namespace cvf {

/// L1 distance.
inline double cityblock(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "cityblock operands differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double cityblock(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return cityblock(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                   std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

struct TemplateRecord {
  std::string subject_id;
  std::optional<std::string> finger_id;
  std::vector<double> fused;
  std::string image_hash;
  std::string config_hash;
  std::string model_hash;
};

inline std::string image_hash(const GrayImage& img) {
  Fnv1a h;
  const int dims[2] = {img.width(), img.height()};
  h.update_values(std::span<const int>(dims));
  h.update_values(img.pixels.values());
  return h.hex();
}

inline constexpr int kTemplateDbVersion = 1;

/// subject id → templates in insertion order, all bound to one model.
/// Readers may run concurrently; writers are exclusive.
class TemplateDB {
 public:
  explicit TemplateDB(std::string model_hash) : model_hash_(std::move(model_hash)) {}
  TemplateDB(TemplateDB&& other) noexcept
      : model_hash_(std::move(other.model_hash_)), order_(std::move(other.order_)), by_subject_(std::move(other.by_subject_)) {}
  TemplateDB& operator=(TemplateDB&& other) noexcept {
    model_hash_ = std::move(other.model_hash_);
    order_ = std::move(other.order_);
    by_subject_ = std::move(other.by_subject_);
    return *this;
  }

  const std::string& model_hash() const noexcept { return model_hash_; }

  void add(TemplateRecord record) {
    if (record.subject_id.empty()) throw Error(ErrorCode::ValidationError, "subject id must not be empty");
    if (record.model_hash != model_hash_) {
      throw Error(ErrorCode::ModelMismatch, "record model " + record.model_hash + " != database model " + model_hash_);
    }
    std::unique_lock lock(mutex_);
    for (const auto& [_, recs] : by_subject_) {
      if (!recs.empty() && recs.front().fused.size() != record.fused.size()) {
        throw Error(ErrorCode::DimensionMismatch, "fused template length differs from the database");
      }
      break;
    }
    auto [it, inserted] = by_subject_.try_emplace(record.subject_id);
    if (inserted) order_.push_back(record.subject_id);
    it->second.push_back(std::move(record));
  }

  bool contains(const std::string& subject) const {
    std::shared_lock lock(mutex_);
    return by_subject_.contains(subject);
  }

  std::vector<TemplateRecord> records(const std::string& subject) const {
    std::shared_lock lock(mutex_);
    const auto it = by_subject_.find(subject);
    if (it == by_subject_.end()) throw Error(ErrorCode::UnknownSubject, "no templates for '" + subject + "'");
    return it->second;
  }

  std::vector<std::string> subjects() const {
    std::shared_lock lock(mutex_);
    return order_;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    std::size_t n = 0;
    for (const auto& [_, recs] : by_subject_) n += recs.size();
    return n;
  }

  /// Rewrites the whole file.
  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::string bytes = header_line();
    for (const auto& subject : order_)
      for (const auto& rec : by_subject_.at(subject)) bytes += encode_record(rec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::DBWriteFailure, "cannot write " + path.string());
  }

  /// Appends one record to the log at `path`, creating it when absent.
  void append(const std::filesystem::path& path, const TemplateRecord& record) const {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::DBWriteFailure, "cannot open " + path.string());
    if (fresh) out << header_line();
    const std::string bytes = encode_record(record);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::DBWriteFailure, "cannot append to " + path.string());
  }

  static TemplateDB load(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto eol = bytes.find('\n');
    if (eol == std::string::npos) throw Error(ErrorCode::CorruptFile, "template database header missing");
    std::optional<TemplateDB> db;
    try {
      const auto header = nlohmann::json::parse(bytes.substr(0, eol));
      if (header.at("version").get<int>() != kTemplateDbVersion) {
        throw Error(ErrorCode::VersionMismatch, "template database version " + header.at("version").dump());
      }
      db.emplace(header.at("model_hash").get<std::string>());
      std::size_t pos = eol + 1;
      while (pos < bytes.size()) {
        const std::uint32_t meta_len = read_u32(bytes, pos);
        if (bytes.size() - pos < meta_len) throw Error(ErrorCode::CorruptFile, "truncated template record");
        const auto meta = nlohmann::json::parse(bytes.substr(pos, meta_len));
        pos += meta_len;
        const std::uint32_t count = read_u32(bytes, pos);
        if ((bytes.size() - pos) / 8 < count) throw Error(ErrorCode::CorruptFile, "truncated template vector");
        TemplateRecord rec;
        rec.subject_id = meta.at("subject_id").get<std::string>();
        if (meta.contains("finger_id")) rec.finger_id = meta.at("finger_id").get<std::string>();
        rec.image_hash = meta.at("image_hash").get<std::string>();
        rec.config_hash = meta.at("config_hash").get<std::string>();
        rec.model_hash = meta.at("model_hash").get<std::string>();
        rec.fused.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) rec.fused[i] = detail::get_f64(bytes.data() + pos + 8 * i);
        pos += 8 * static_cast<std::size_t>(count);
        db->add(std::move(rec));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptFile, std::string("template database: ") + e.what());
    }
    return std::move(*db);
  }

 private:
  std::string header_line() const {
    return nlohmann::json({{"version", kTemplateDbVersion}, {"model_hash", model_hash_}}).dump() + "\n";
  }

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }

  static std::uint32_t read_u32(const std::string& bytes, std::size_t& pos) {
    if (bytes.size() - pos < 4) throw Error(ErrorCode::CorruptFile, "truncated template record");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  static std::string encode_record(const TemplateRecord& rec) {
    nlohmann::json meta = {{"subject_id", rec.subject_id},
                           {"image_hash", rec.image_hash},
                           {"config_hash", rec.config_hash},
                           {"model_hash", rec.model_hash}};
    if (rec.finger_id) meta["finger_id"] = *rec.finger_id;
    const std::string text = meta.dump();
    std::string out;
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    put_u32(out, static_cast<std::uint32_t>(rec.fused.size()));
    for (double v : rec.fused) detail::put_f64(out, v);
    return out;
  }

  std::string model_hash_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<TemplateRecord>> by_subject_;
  mutable std::shared_mutex mutex_;
};

/// The extractor and fitted model used for both enrollment and matching.
struct MatchingContext {
  const Extractor& extractor;
  const CcaModel& model;
  std::string model_hash;

  MatchingContext(const Extractor& e, const CcaModel& m) : extractor(e), model(m), model_hash(cvf::model_hash(m)) {}

  std::vector<double> fused_vector(const GrayImage& img) const {
    const Eigen::VectorXd z = fuse(model, extractor.extract(img));
    return {z.data(), z.data() + z.size()};
  }

  TemplateRecord make_record(const GrayImage& img, std::string subject_id,
                             std::optional<std::string> finger_id = {}) const {
    return TemplateRecord{std::move(subject_id), std::move(finger_id), fused_vector(img), image_hash(img),
                          extractor.config_hash(), model_hash};
  }
};

/// Extracts, fuses and stores one template under `subject_id`.
inline TemplateRecord enroll(const GrayImage& img, const std::string& subject_id, const MatchingContext& ctx,
                             TemplateDB& db, std::optional<std::string> finger_id = {}) {
  TemplateRecord rec = ctx.make_record(img, subject_id, std::move(finger_id));
  db.add(rec);
  return rec;
}

enum class Decision { Accept, Reject };

inline std::string to_string(Decision d) { return d == Decision::Accept ? "accept" : "reject"; }

struct MatchResult {
  double score = std::numeric_limits<double>::infinity();
  std::vector<double> per_template_scores;
  std::optional<Decision> decision;
};

/// Minimum city-block distance over the subject's templates.
inline MatchResult match_fused(std::span<const double> probe, const std::vector<TemplateRecord>& templates) {
  MatchResult result;
  for (const auto& t : templates) {
    const double s = cityblock(probe, t.fused);
    result.per_template_scores.push_back(s);
    result.score = std::min(result.score, s);
  }
  return result;
}

inline MatchResult match(const GrayImage& img, const std::string& subject_id, const MatchingContext& ctx,
                         const TemplateDB& db) {
  if (db.model_hash() != ctx.model_hash) throw Error(ErrorCode::ModelMismatch, "database bound to another model");
  const auto templates = db.records(subject_id);
  const auto probe = ctx.fused_vector(img);
  return match_fused(probe, templates);
}

/// Accept iff score <= threshold.
inline Decision verify(const MatchResult& result, double threshold) {
  if (!(threshold >= 0.0)) throw Error(ErrorCode::ValidationError, "threshold must be >= 0");
  return result.score <= threshold ? Decision::Accept : Decision::Reject;
}

}  // namespace cvf

#endif  // CROSSVFINGER_MATCHER_HPP
