#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <png.h>

#include "crossvfinger/preprocess.hpp"
#include "support.hpp"

using namespace cvf;
using cvf::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

namespace {

GrayImage noise_image(int w, int h, std::uint64_t seed, double mean = 120, double sd = 30) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, sd);
  GrayImage img(w, h);
  for (double& v : img.pixels.values()) v = std::clamp(std::round(dist(rng)), 0.0, 255.0);
  return img;
}

void write_rgb_png(const fs::path& path, int w, int h) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  ASSERT_NE(fp, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3, 77);
  for (int r = 0; r < h; ++r) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ValidationError;  // sentinel: nothing thrown
}

}  // namespace

TEST(ImageIo, TinyPgmRoundTripKeepsValuesRowMajor) {
  TempDir dir("pgm2");
  GrayImage img(2, 2);
  img(0, 0) = 0, img(0, 1) = 85, img(1, 0) = 170, img(1, 1) = 255;
  save_pgm(img, dir / "a.pgm");
  const GrayImage back = load_image(dir / "a.pgm", LoadOptions{0});
  ASSERT_EQ(back.width(), 2);
  ASSERT_EQ(back.height(), 2);
  EXPECT_EQ(std::vector<double>(back.pixels.values().begin(), back.pixels.values().end()),
            (std::vector<double>{0, 85, 170, 255}));
}

TEST(ImageIo, AsciiPgmWithCommentsIsRead) {
  TempDir dir("p2");
  std::ofstream(dir / "a.pgm") << "P2\n# comment\n3 1\n# another\n255\n1 2 255\n";
  const GrayImage img = load_image(dir / "a.pgm", LoadOptions{0});
  EXPECT_EQ(img(0, 0), 1);
  EXPECT_EQ(img(0, 1), 2);
  EXPECT_EQ(img(0, 2), 255);
}

TEST(ImageIo, SixteenBitPgmIsScaledTo255) {
  TempDir dir("p5_16");
  {
    std::ofstream out(dir / "a.pgm", std::ios::binary);
    out << "P5\n2 1\n65535\n";
    const unsigned char px[] = {0x00, 0x00, 0xff, 0xff};
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  const GrayImage img = load_image(dir / "a.pgm", LoadOptions{0});
  EXPECT_EQ(img(0, 0), 0);
  EXPECT_DOUBLE_EQ(img(0, 1), 255);
}

TEST(ImageIo, PgmSaveLoadSaveIsBitExact) {
  TempDir dir("pgm_rt");
  const GrayImage img = noise_image(70, 66, 3);
  save_pgm(img, dir / "a.pgm");
  const GrayImage once = load_image(dir / "a.pgm");
  save_pgm(once, dir / "b.pgm");
  EXPECT_EQ(once.pixels, img.pixels);
  EXPECT_EQ(slurp(dir / "a.pgm"), slurp(dir / "b.pgm"));
}

TEST(ImageIo, GrayPngRoundTrip) {
  TempDir dir("png_rt");
  const GrayImage img = noise_image(64, 80, 4);
  save_png(img, dir / "a.png");
  EXPECT_EQ(load_image(dir / "a.png").pixels, img.pixels);
}

TEST(ImageIo, RgbPngIsRejected) {
  TempDir dir("rgb");
  write_rgb_png(dir / "c.png", 64, 64);
  EXPECT_EQ(code_of([&] { load_image(dir / "c.png"); }), ErrorCode::UnsupportedFormat);
}

TEST(ImageIo, SmallAndMissingImagesAreRejected) {
  TempDir dir("small");
  save_pgm(noise_image(32, 32, 5), dir / "s.pgm");
  EXPECT_EQ(code_of([&] { load_image(dir / "s.pgm"); }), ErrorCode::ImageTooSmall);
  EXPECT_EQ(code_of([&] { load_image(dir / "missing.pgm"); }), ErrorCode::FileNotFound);
  std::ofstream(dir / "junk.pgm") << "hello";
  EXPECT_EQ(code_of([&] { load_image(dir / "junk.pgm"); }), ErrorCode::UnsupportedFormat);
}

TEST(Normalize, HitsTargetMoments) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage out = normalize(noise_image(90, 70, seed, 60 + 10.0 * seed, 5 + 3.0 * seed));
    const auto m = moments(out.pixels);
    EXPECT_NEAR(m.mean, 100.0, 0.5);
    EXPECT_NEAR(m.variance, 100.0, 2.0);
  }
}

TEST(Normalize, ConstantImageHasZeroVariance) {
  EXPECT_EQ(code_of([] { normalize(GrayImage(64, 64, 42.0)); }), ErrorCode::ZeroVariance);
}

TEST(Normalize, FixedPointAndIdempotence) {
  const GrayImage once = normalize(noise_image(80, 80, 9));
  const GrayImage twice = normalize(once);
  for (std::size_t i = 0; i < once.pixels.size(); ++i) {
    EXPECT_NEAR(twice.pixels.values()[i], once.pixels.values()[i], 1.0);
  }
}

TEST(Segment, RidgePatchOnFlatBackgroundMatchesBruteForceBlocks) {
  // 96x80 image, 16 px blocks, a grating on blocks (1..3, 1..4) only.
  GrayImage img(96, 80, 128.0);
  for (int r = 16; r < 64; ++r)
    for (int c = 16; c < 80; ++c) img(r, c) = 128 + 60 * std::sin(2 * kPi * c / 8.0);
  const ForegroundMask mask = segment(img, 16, 100.0);
  for (int br = 0; br < 5; ++br) {
    for (int bc = 0; bc < 6; ++bc) {
      double sum = 0, sq = 0;
      for (int r = br * 16; r < br * 16 + 16; ++r)
        for (int c = bc * 16; c < bc * 16 + 16; ++c) sum += img(r, c), sq += img(r, c) * img(r, c);
      const double var = sq / 256 - (sum / 256) * (sum / 256);
      const bool expected = var >= 100.0;
      const bool patch = br >= 1 && br <= 3 && bc >= 1 && bc <= 4;
      EXPECT_EQ(expected, patch);
      for (int r = br * 16; r < br * 16 + 16; ++r)
        for (int c = bc * 16; c < bc * 16 + 16; ++c) ASSERT_EQ(mask(r, c), patch) << r << "," << c;
    }
  }
}

TEST(Segment, EdgeBlocksUseTheirOwnPixels) {
  // 70 px wide: the last column block is 6 px wide and holds a stripe pattern.
  GrayImage img(70, 64, 50.0);
  for (int r = 0; r < 64; ++r)
    for (int c = 64; c < 70; ++c) img(r, c) = (c % 2) ? 0 : 200;
  const ForegroundMask mask = segment(img, 16, 100.0);
  EXPECT_TRUE(mask(0, 69));
  EXPECT_TRUE(mask(63, 64));
  EXPECT_FALSE(mask(0, 63));
}

TEST(Segment, DegenerateThresholds) {
  EXPECT_EQ(code_of([] { segment(GrayImage(64, 64, 7.0)); }), ErrorCode::EmptyForeground);
  const ForegroundMask all = segment(GrayImage(64, 64, 7.0), 16, 0.0);
  EXPECT_DOUBLE_EQ(all.coverage(), 1.0);
}

TEST(Segment, ShufflingInsideBlocksKeepsTheMask) {
  GrayImage img = noise_image(64, 64, 11, 120, 8);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 64; ++c) img(r, c) = 120;
  const ForegroundMask before = segment(img, 16, 50.0);
  std::mt19937_64 rng(1);
  GrayImage shuffled = img;
  for (int br = 0; br < 4; ++br)
    for (int bc = 0; bc < 4; ++bc) {
      std::vector<double> px;
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) px.push_back(img(br * 16 + r, bc * 16 + c));
      std::ranges::shuffle(px, rng);
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) shuffled(br * 16 + r, bc * 16 + c) = px[static_cast<std::size_t>(r * 16 + c)];
    }
  EXPECT_EQ(segment(shuffled, 16, 50.0).flags, before.flags);
}
