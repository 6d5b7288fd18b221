#ifndef CROSSVFINGER_HASH_HPP
#define CROSSVFINGER_HASH_HPP

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace cvf {

/// 64-bit FNV-1a, used for provenance tags (model, image, config hashes).
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::string_view text) { return update(std::as_bytes(std::span(text))); }
  template <class T>
  Fnv1a& update_values(std::span<const T> values) {
    return update(std::as_bytes(values));
  }

  std::uint64_t value() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view text) { return Fnv1a{}.update(text).hex(); }

}  // namespace cvf

#endif  // CROSSVFINGER_HASH_HPP
