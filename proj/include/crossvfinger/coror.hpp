#ifndef CROSSVFINGER_COROR_HPP
#define CROSSVFINGER_COROR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crossvfinger/error.hpp"
#include "crossvfinger/orientation.hpp"

namespace cvf {

/// Co-occurrence direction. Displacements are (row, col) with rows
/// increasing downward.
enum class Direction : int { Deg0 = 0, Deg45 = 45, Deg90 = 90, Deg135 = 135 };

inline int to_degrees(Direction d) { return static_cast<int>(d); }

inline Direction direction_from_degrees(int deg) {
  switch (deg) {
    case 0: return Direction::Deg0;
    case 45: return Direction::Deg45;
    case 90: return Direction::Deg90;
    case 135: return Direction::Deg135;
    default: throw Error(ErrorCode::InvalidConfig, "direction must be 0, 45, 90 or 135, got " + std::to_string(deg));
  }
}

struct Displacement {
  int drow;
  int dcol;
};

inline Displacement displacement(Direction phi, int d) {
  switch (phi) {
    case Direction::Deg0: return {0, d};
    case Direction::Deg45: return {-d, d};
    case Direction::Deg90: return {-d, 0};
    case Direction::Deg135: return {-d, -d};
  }
  return {0, d};
}

inline const std::vector<int> kDefaultOffsets = {5, 10, 15};
inline const std::vector<Direction> kDefaultDirections = {Direction::Deg0, Direction::Deg45,
                                                          Direction::Deg90, Direction::Deg135};

struct CoRorMatrix {
  // counts[i][j] for bins i, j in 1..8 is stored at [(i-1)][(j-1)].
  std::array<std::array<std::uint64_t, kOrientationBins>, kOrientationBins> counts{};
  int offset_d = 1;
  Direction direction_phi = Direction::Deg0;

  std::uint64_t at(int i, int j) const { return counts[i - 1][j - 1]; }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s = std::accumulate(row.begin(), row.end(), s);
    return s;
  }
};

struct CoRorDescriptor {
  std::vector<double> values;
  std::vector<int> offsets;
  std::vector<Direction> directions;
};

inline std::size_t coror_length(std::size_t n_offsets, std::size_t n_directions) {
  return static_cast<std::size_t>(kOrientationBins) * kOrientationBins * n_offsets * n_directions;
}

/// Directional (ordered) co-occurrence counts of quantized orientations at
/// displacement (d, phi). Pairs leaving the frame or touching an invalid
/// pixel are skipped.
inline CoRorMatrix cooccurrence(const QuantizedOrientationField& field, int d, Direction phi) {
  if (d < 1) throw Error(ErrorCode::InvalidConfig, "co-occurrence offset must be >= 1");
  if (d >= std::min(field.width(), field.height())) {
    throw Error(ErrorCode::OffsetTooLarge, "offset " + std::to_string(d) + " does not fit the field");
  }
  CoRorMatrix m;
  m.offset_d = d;
  m.direction_phi = phi;
  const auto [dr, dc] = displacement(phi, d);
  const int w = field.width();
  const int h = field.height();
  const int r_lo = std::max(0, -dr), r_hi = std::min(h, h - dr);
  const int c_lo = std::max(0, -dc), c_hi = std::min(w, w - dc);
  for (int r = r_lo; r < r_hi; ++r) {
    for (int c = c_lo; c < c_hi; ++c) {
      if (!field.valid(r, c) || !field.valid(r + dr, c + dc)) continue;
      ++m.counts[field.bins(r, c) - 1][field.bins(r + dr, c + dc) - 1];
    }
  }
  return m;
}

/// Subtract the mean, divide by the L2 norm.
inline void zero_mean_unit_norm(std::span<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double norm2 = 0.0;
  for (double& x : v) {
    x -= mean;
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  for (double& x : v) x /= norm;
}

/// Concatenates the row-major flattened matrices in offset-major,
/// direction-minor order and normalizes to zero mean and unit length.
inline CoRorDescriptor build_coror(const QuantizedOrientationField& field,
                                   const std::vector<int>& offsets = kDefaultOffsets,
                                   const std::vector<Direction>& directions = kDefaultDirections) {
  if (offsets.empty() || directions.empty()) {
    throw Error(ErrorCode::InvalidConfig, "Co-Ror needs at least one offset and one direction");
  }
  CoRorDescriptor desc{{}, offsets, directions};
  desc.values.reserve(coror_length(offsets.size(), directions.size()));
  for (int d : offsets) {
    for (Direction phi : directions) {
      const CoRorMatrix m = cooccurrence(field, d, phi);
      for (const auto& row : m.counts)
        for (std::uint64_t v : row) desc.values.push_back(static_cast<double>(v));
    }
  }
  if (std::ranges::adjacent_find(desc.values, std::ranges::not_equal_to{}) == desc.values.end()) {
    throw Error(ErrorCode::DegenerateDescriptor, "all co-occurrence counts are equal");
  }
  zero_mean_unit_norm(desc.values);
  return desc;
}

}  // namespace cvf

#endif  // CROSSVFINGER_COROR_HPP
