#ifndef CROSSVFINGER_IMAGE_HPP
#define CROSSVFINGER_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "crossvfinger/error.hpp"

namespace cvf {

/// Dense row-major 2-D array. Used for images, gradient components,
/// orientation angles and per-pixel masks alike.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  const T& operator()(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }

  bool contains(int row, int col) const noexcept {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;

/// Grayscale image with intensities stored as doubles in [0, 255].
struct GrayImage {
  Grid<double> pixels;
  std::optional<int> dpi;

  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0) : pixels(width, height, fill) {}
  explicit GrayImage(Grid<double> grid) : pixels(std::move(grid)) {}

  int width() const noexcept { return pixels.width(); }
  int height() const noexcept { return pixels.height(); }
  double& operator()(int row, int col) { return pixels(row, col); }
  double operator()(int row, int col) const { return pixels(row, col); }
};

inline constexpr int kMinDescriptorSide = 64;

struct LoadOptions {
  int min_side = kMinDescriptorSide;
};

namespace detail {

inline bool is_pgm_whitespace(int c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Reads one header token of a netpbm file, skipping '#' comments.
inline std::string pgm_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!is_pgm_whitespace(c)) {
      break;
    }
    c = in.get();
  }
  while (c != EOF && !is_pgm_whitespace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (token.empty()) throw Error(ErrorCode::UnsupportedFormat, "truncated PGM header");
  return token;
}

inline int pgm_int(std::istream& in) {
  const std::string tok = pgm_token(in);
  try {
    std::size_t used = 0;
    const int value = std::stoi(tok, &used);
    if (used != tok.size() || value < 0) throw std::invalid_argument(tok);
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UnsupportedFormat, "bad PGM header field '" + tok + "'");
  }
}

inline GrayImage read_pgm(std::istream& in) {
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2')) {
    throw Error(ErrorCode::UnsupportedFormat, "not a P2/P5 PGM file");
  }
  const bool binary = magic[1] == '5';
  const int width = pgm_int(in);
  const int height = pgm_int(in);
  const int maxval = pgm_int(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw Error(ErrorCode::UnsupportedFormat, "invalid PGM dimensions or maxval");
  }
  GrayImage img(width, height);
  const double scale = 255.0 / maxval;
  auto store = [&](std::size_t i, int raw) {
    if (raw > maxval) throw Error(ErrorCode::UnsupportedFormat, "PGM sample exceeds maxval");
    img.pixels.values()[i] = maxval == 255 ? raw : raw * scale;
  };
  const std::size_t count = img.pixels.size();
  if (binary) {
    // pgm_token consumed exactly one whitespace byte after maxval.
    const std::size_t bytes_per = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(count * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw Error(ErrorCode::UnsupportedFormat, "truncated PGM raster");
    }
    for (std::size_t i = 0; i < count; ++i) {
      store(i, bytes_per == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) store(i, pgm_int(in));
  }
  return img;
}

inline GrayImage read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw Error(ErrorCode::FileNotFound, path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorCode::IOFailure, "libpng initialisation failed");
  }
  GrayImage img;
  bool color = false;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw Error(ErrorCode::UnsupportedFormat, "corrupt PNG: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    color = true;
  } else {
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (int r = 0; r < height; ++r) rows[r] = buffer.data() + r * rowbytes;
    png_read_image(png, rows.data());
    img = GrayImage(width, height);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        img(r, c) = depth == 16 ? ((rows[r][2 * c] << 8) | rows[r][2 * c + 1]) * (255.0 / 65535.0)
                                : rows[r][c];
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  if (color) throw Error(ErrorCode::UnsupportedFormat, "color PNG rejected: " + path.string());
  return img;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace detail

/// Loads a P2/P5 PGM or grayscale PNG. Color PNGs are rejected.
inline GrayImage load_image(const std::filesystem::path& path, LoadOptions options = {}) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::FileNotFound, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  const auto got = in.gcount();
  in.clear();
  in.seekg(0);
  GrayImage img;
  if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) {
    in.close();
    img = detail::read_png(path);
  } else if (got >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) {
    img = detail::read_pgm(in);
  } else {
    throw Error(ErrorCode::UnsupportedFormat, "expected PGM or PNG: " + path.string());
  }
  if (img.width() < options.min_side || img.height() < options.min_side) {
    throw Error(ErrorCode::ImageTooSmall, std::to_string(img.width()) + "x" +
                                              std::to_string(img.height()) + " below " +
                                              std::to_string(options.min_side));
  }
  return img;
}

/// Writes a binary (P5) PGM; values are rounded and clamped to [0,255].
inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<std::uint8_t> raw(img.pixels.size());
  std::ranges::transform(img.pixels.values(), raw.begin(), detail::to_byte);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::IOFailure, "short write " + path.string());
}

/// Writes an 8-bit grayscale PNG.
inline void save_png(const GrayImage& img, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error(ErrorCode::IOFailure, "PNG encode failed: " + path.string());
  }
  std::vector<png_byte> buffer(img.pixels.size());
  std::ranges::transform(img.pixels.values(), buffer.begin(), detail::to_byte);
  std::vector<png_bytep> rows(img.height());
  for (int r = 0; r < img.height(); ++r) rows[r] = buffer.data() + static_cast<std::size_t>(r) * img.width();
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw Error(ErrorCode::IOFailure, "close failed: " + path.string());
}

/// Picks the encoder from the extension (".png" or anything else → PGM).
inline void save_image(const GrayImage& img, const std::filesystem::path& path) {
  if (path.extension() == ".png") {
    save_png(img, path);
  } else {
    save_pgm(img, path);
  }
}

}  // namespace cvf

#endif  // CROSSVFINGER_IMAGE_HPP
