#ifndef CROSSVFINGER_DESCRIPTOR_IO_HPP
#define CROSSVFINGER_DESCRIPTOR_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossvfinger/coror.hpp"
#include "crossvfinger/error.hpp"
#include "crossvfinger/gaborhog.hpp"

namespace cvf {

inline constexpr int kDescriptorVersion = 1;

/// A descriptor file: JSON header line, then `length` little-endian float32.
struct DescriptorFile {
  nlohmann::json header;
  std::vector<float> values;
};

namespace detail {

inline std::string encode_descriptor(nlohmann::json header, const std::vector<double>& values) {
  header["version"] = kDescriptorVersion;
  header["length"] = values.size();
  std::string out = header.dump();
  out.push_back('\n');
  for (double v : values) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char buf[4];
    std::memcpy(buf, &bits, 4);
    out.append(buf, 4);
  }
  return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IOFailure, "short write " + path.string());
}

}  // namespace detail

inline std::string encode(const CoRorDescriptor& d) {
  std::vector<int> dirs;
  for (Direction phi : d.directions) dirs.push_back(to_degrees(phi));
  return detail::encode_descriptor({{"kind", "coror"}, {"offsets", d.offsets}, {"directions", dirs}}, d.values);
}

inline std::string encode(const GaborHogDescriptor& d) {
  return detail::encode_descriptor({{"kind", "gaborhog"}, {"bins", d.bins}, {"maps", d.maps}}, d.values);
}

inline void save_descriptor(const CoRorDescriptor& d, const std::filesystem::path& path) {
  detail::write_bytes(path, encode(d));
}

inline void save_descriptor(const GaborHogDescriptor& d, const std::filesystem::path& path) {
  detail::write_bytes(path, encode(d));
}

inline DescriptorFile decode_descriptor(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw Error(ErrorCode::CorruptFile, "descriptor header missing");
  DescriptorFile f;
  try {
    f.header = nlohmann::json::parse(bytes.substr(0, eol));
    if (f.header.at("version").get<int>() != kDescriptorVersion) {
      throw Error(ErrorCode::VersionMismatch, "descriptor version " + f.header.at("version").dump());
    }
    const auto length = f.header.at("length").get<std::size_t>();
    if (bytes.size() - eol - 1 != length * 4) throw Error(ErrorCode::CorruptFile, "descriptor length mismatch");
    f.values.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + eol + 1 + 4 * i, 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      f.values[i] = std::bit_cast<float>(bits);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("bad descriptor header: ") + e.what());
  }
  return f;
}

}  // namespace cvf

#endif  // CROSSVFINGER_DESCRIPTOR_IO_HPP
