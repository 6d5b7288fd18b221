#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "crossvfinger/eval.hpp"
#include "crossvfinger/synth.hpp"
#include "support.hpp"

using namespace cvf;
using cvf::testing::TempDir;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ValidationError;
}

std::vector<double> pixels_of(const GrayImage& img) {
  const auto v = img.pixels.values();
  return {v.begin(), v.end()};
}

DatasetEntry entry(const std::string& stem) { return {stem + ".png", *parse_sample_name(stem)}; }

ScoreSet normal_scores(std::mt19937_64& rng, std::size_t ng, std::size_t ni, double gmean, double imean, double sd = 1.0) {
  std::normal_distribution<double> g(gmean, sd), i(imean, sd);
  ScoreSet s;
  for (std::size_t k = 0; k < ng; ++k) s.genuine.push_back(g(rng));
  for (std::size_t k = 0; k < ni; ++k) s.impostor.push_back(i(rng));
  return s;
}

}  // namespace

TEST(SampleName, ParsesFromTheRight) {
  const auto id = parse_sample_name("lab_7_2_3");
  ASSERT_TRUE(id);
  EXPECT_EQ(id->subject, "lab_7");
  EXPECT_EQ(id->finger, "2");
  EXPECT_EQ(id->impression, "3");
  EXPECT_EQ(id->identity(), "lab_7_2");
  EXPECT_FALSE(parse_sample_name("001_1"));
  EXPECT_FALSE(parse_sample_name("_1_2"));
  EXPECT_FALSE(parse_sample_name("a__2"));
  EXPECT_FALSE(parse_sample_name("a_1_"));
}

TEST(ScanDataset, SortedAndFiltered) {
  TempDir dir("scan");
  GrayImage img(8, 8);
  for (const char* name : {"002_1_1.png", "001_1_2.png", "001_1_1.png"}) save_png(img, dir / name);
  std::ofstream(dir / "notes.txt") << "x";
  save_png(img, dir / "badname.png");
  const auto entries = scan_dataset(dir.path());
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[0].path.filename(), "001_1_1.png");
  EXPECT_EQ(entries[2].path.filename(), "002_1_1.png");
  TempDir empty("empty");
  EXPECT_EQ(code_of([&] { scan_dataset(empty.path()); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of([&] { scan_dataset(empty / "nope"); }), ErrorCode::FileNotFound);
}

TEST(ScoreProtocol, SelfPairsAreExcluded) {
  const std::vector<DatasetEntry> set{entry("a_1_1"), entry("a_1_2"), entry("b_1_1"), entry("b_1_2")};
  const std::vector<std::vector<double>> fused{{0.0}, {1.0}, {10.0}, {12.0}};
  const ScoreSet s = score_protocol(set, fused, set, fused, true, 0, 0);
  ASSERT_EQ(s.genuine.size(), 4u);
  ASSERT_EQ(s.impostor.size(), 4u);
  EXPECT_EQ(s.genuine, (std::vector<double>{1.0, 1.0, 2.0, 2.0}));
  // probe a_1_1 vs identity b: min(10, 12)
  EXPECT_EQ(s.impostor, (std::vector<double>{10.0, 9.0, 9.0, 11.0}));
}

TEST(ScoreProtocol, CrossSetUsesEveryTemplate) {
  const std::vector<DatasetEntry> gallery{entry("a_1_1"), entry("a_1_2"), entry("b_1_1")};
  const std::vector<DatasetEntry> probe{entry("a_1_1"), entry("b_1_1"), entry("c_1_1")};
  const std::vector<std::vector<double>> g{{0.0}, {3.0}, {10.0}}, p{{2.0}, {9.0}, {5.0}};
  const ScoreSet s = score_protocol(gallery, g, probe, p, false, 0, 0);
  EXPECT_EQ(s.genuine, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(s.impostor, (std::vector<double>{8.0, 6.0, 2.0, 5.0}));
}

TEST(ScoreProtocol, ImpostorCapIsDeterministic) {
  std::vector<DatasetEntry> set;
  std::vector<std::vector<double>> fused;
  for (int s = 0; s < 32; ++s) {
    set.push_back(entry("s" + std::to_string(s) + "_1_1"));
    fused.push_back({static_cast<double>(s)});
  }
  const ScoreSet all = score_protocol(set, fused, set, fused, false, 0, 0);
  ASSERT_EQ(all.impostor.size(), 32u * 31u);
  const ScoreSet a = score_protocol(set, fused, set, fused, false, 100, 42);
  const ScoreSet b = score_protocol(set, fused, set, fused, false, 100, 42);
  const ScoreSet c = score_protocol(set, fused, set, fused, false, 100, 43);
  EXPECT_EQ(a.impostor.size(), 100u);
  EXPECT_EQ(a.impostor, b.impostor);
  EXPECT_NE(a.impostor, c.impostor);
  EXPECT_EQ(a.genuine.size(), 32u);
}

TEST(Metrics, PerfectSeparation) {
  const Metrics m = compute_metrics({{0.1, 0.2, 0.3}, {1.0, 2.0, 3.0, 4.0}});
  EXPECT_EQ(m.eer, 0.0);
  EXPECT_EQ(m.zero_fmr, 0.0);
  EXPECT_EQ(m.fmr100, 0.0);
  EXPECT_EQ(m.n_genuine, 3u);
  EXPECT_EQ(m.n_impostor, 4u);
}

TEST(Metrics, CompleteOverlapIsOne) {
  const Metrics m = compute_metrics({{5.0, 6.0}, {1.0, 2.0}});
  EXPECT_EQ(m.eer, 1.0);
  EXPECT_EQ(m.zero_fmr, 1.0);
}

TEST(Metrics, IdenticalDistributionsGiveOneHalf) {
  std::mt19937_64 rng(3);
  const Metrics m = compute_metrics(normal_scores(rng, 10000, 10000, 0.0, 0.0));
  EXPECT_NEAR(m.eer, 0.5, 0.02);
}

TEST(Metrics, AgreesWithExhaustiveSweep) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t ng = 50 + trial * 7, ni = 400 - trial * 5;
    const ScoreSet s = normal_scores(rng, ng, ni, 0.0, 1.5);
    const Metrics m = compute_metrics(s);
    const auto oracle = cvf::testing::exhaustive_eer(s.genuine, s.impostor);
    EXPECT_LE(std::abs(m.eer - oracle.eer), 1.0 / static_cast<double>(ng + ni) + 1.0 / static_cast<double>(std::min(ng, ni)));
  }
}

TEST(Metrics, DetCurveIsMonotone) {
  std::mt19937_64 rng(5);
  const Metrics m = compute_metrics(normal_scores(rng, 300, 700, 0.0, 1.0));
  ASSERT_FALSE(m.det.empty());
  for (std::size_t i = 1; i < m.det.size(); ++i) {
    EXPECT_LT(m.det[i - 1].threshold, m.det[i].threshold);
    EXPECT_LE(m.det[i - 1].fmr, m.det[i].fmr);
    EXPECT_GE(m.det[i - 1].fnmr, m.det[i].fnmr);
  }
  EXPECT_EQ(m.det.back().fmr, 1.0);
  EXPECT_EQ(m.det.back().fnmr, 0.0);
  EXPECT_LE(m.fmr100, m.fmr1000);
  EXPECT_LE(m.fmr1000, m.zero_fmr);
  EXPECT_GE(m.eer, 0.0);
  EXPECT_LE(m.eer, 1.0);
}

TEST(Metrics, EerSitsWhereTheRatesCross) {
  std::mt19937_64 rng(6);
  const ScoreSet s = normal_scores(rng, 500, 500, 0.0, 1.0);
  const Metrics m = compute_metrics(s);
  double fm = 0, fnm = 0;
  for (double v : s.impostor) fm += v <= m.eer_threshold;
  for (double v : s.genuine) fnm += v > m.eer_threshold;
  EXPECT_LE(std::abs(fm / 500 - fnm / 500), 2.0 / 500 + 1e-12);
}

TEST(Metrics, InvariantToOrderAndDuplication) {
  std::mt19937_64 rng(7);
  ScoreSet s = normal_scores(rng, 200, 300, 0.0, 1.2);
  const Metrics m = compute_metrics(s);
  ScoreSet shuffled = s;
  std::ranges::shuffle(shuffled.genuine, rng);
  std::ranges::shuffle(shuffled.impostor, rng);
  EXPECT_EQ(compute_metrics(shuffled).eer, m.eer);
  ScoreSet doubled = s;
  doubled.genuine.insert(doubled.genuine.end(), s.genuine.begin(), s.genuine.end());
  doubled.impostor.insert(doubled.impostor.end(), s.impostor.begin(), s.impostor.end());
  const Metrics d = compute_metrics(doubled);
  EXPECT_NEAR(d.eer, m.eer, 1e-12);
  EXPECT_NEAR(d.fmr100, m.fmr100, 1e-12);
}

TEST(Metrics, RejectsEmptyOrNonFinite) {
  EXPECT_EQ(code_of([] { compute_metrics({{}, {1.0}}); }), ErrorCode::EmptyScores);
  EXPECT_EQ(code_of([] { compute_metrics({{1.0}, {}}); }), ErrorCode::EmptyScores);
  EXPECT_EQ(code_of([] { compute_metrics({{std::nan("")}, {1.0}}); }), ErrorCode::EmptyScores);
}

TEST(Report, RoundTripsScoresAndWritesCurves) {
  TempDir dir("report");
  std::mt19937_64 rng(8);
  const ScoreSet s = normal_scores(rng, 40, 60, 1.0 / 3.0, 2.0);
  const Metrics m = compute_metrics(s);
  const auto out = dir / "nested" / "report";
  emit_report(m, s, out);
  const ScoreSet back = read_scores_csv(out / "scores.csv");
  ASSERT_EQ(back.genuine.size(), s.genuine.size());
  ASSERT_EQ(back.impostor.size(), s.impostor.size());
  for (std::size_t i = 0; i < s.genuine.size(); ++i) EXPECT_NEAR(back.genuine[i], s.genuine[i], 1e-12);
  for (std::size_t i = 0; i < s.impostor.size(); ++i) EXPECT_NEAR(back.impostor[i], s.impostor[i], 1e-12);
  const auto j = nlohmann::json::parse(read_file(out / "metrics.json"));
  EXPECT_EQ(j.at("eer").get<double>(), m.eer);
  EXPECT_EQ(j.at("n_impostor").get<std::size_t>(), 60u);
  std::ifstream det(out / "det.csv");
  std::string line;
  std::getline(det, line);
  EXPECT_EQ(line, "threshold,fmr,fnmr");
  double last = -std::numeric_limits<double>::infinity();
  std::size_t rows = 0;
  while (std::getline(det, line)) {
    const double t = std::stod(line.substr(0, line.find(',')));
    EXPECT_GT(t, last);
    last = t;
    ++rows;
  }
  EXPECT_EQ(rows, m.det.size());
}

TEST(Synth, SensorBMagnifiesRidgePeriod) {
  const auto profiles = default_sensor_profiles();
  SensorProfile a = profiles[0], b = profiles[1];
  a.max_rotation_deg = b.max_rotation_deg = 0;
  a.max_shift_px = b.max_shift_px = 0;
  b.crop = 0;
  double ratio_sum = 0;
  const int fingers = 6;
  for (int f = 0; f < fingers; ++f) {
    const MasterFinger master = render_master(11, f);
    const double pa = cvf::testing::autocorrelation_period(render_impression(master, a, 11, f, 0, 0).pixels, 96, 24);
    const double pb = cvf::testing::autocorrelation_period(render_impression(master, b, 11, f, 1, 0).pixels, 96, 24);
    ratio_sum += pb / pa;
  }
  EXPECT_NEAR(ratio_sum / fingers, 1.15, 0.05 * 1.15);
}

TEST(Synth, SameSeedIsBitIdentical) {
  const auto profile = default_sensor_profiles()[1];
  const GrayImage x = render_impression(render_master(5, 2), profile, 5, 2, 1, 0);
  const GrayImage y = render_impression(render_master(5, 2), profile, 5, 2, 1, 0);
  const GrayImage z = render_impression(render_master(6, 2), profile, 6, 2, 1, 0);
  EXPECT_EQ(pixels_of(x), pixels_of(y));
  EXPECT_NE(pixels_of(x), pixels_of(z));
  for (double v : x.pixels.values()) {
    EXPECT_EQ(v, std::round(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 255.0);
  }
}

TEST(Synth, CorpusLayout) {
  TempDir dir("corpus");
  SynthOptions small;
  small.canvas = 96;
  small.master_canvas = 128;
  small.iterations = 3;
  const auto written = generate_synthetic_corpus(1, 50, 2, default_sensor_profiles(), dir.path(), small);
  EXPECT_EQ(written.size(), 200u);
  EXPECT_EQ(scan_dataset(dir / "A").size(), 100u);
  EXPECT_EQ(scan_dataset(dir / "B").size(), 100u);
  EXPECT_TRUE(fs::exists(dir / "A" / "050_1_2.png"));
  const GrayImage b = load_image(dir / "B" / "001_1_1.png");
  EXPECT_EQ(b.width(), static_cast<int>(std::lround(96 * 0.9)));
}

TEST(Synth, InvalidProfilesAndCounts) {
  TempDir dir("badsynth");
  auto profiles = default_sensor_profiles();
  EXPECT_EQ(code_of([&] { generate_synthetic_corpus(1, 1, 1, profiles, dir.path()); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { generate_synthetic_corpus(1, 2, 1, {profiles[0]}, dir.path()); }), ErrorCode::InvalidProfile);
  EXPECT_EQ(code_of([&] { generate_synthetic_corpus(1, 2, 1, {profiles[0], profiles[0]}, dir.path()); }),
            ErrorCode::InvalidProfile);
  SensorProfile bad = profiles[1];
  bad.scale = -1;
  EXPECT_EQ(code_of([&] { validate_profile(bad); }), ErrorCode::InvalidProfile);
  bad = profiles[1];
  bad.crop = 1.0;
  EXPECT_EQ(code_of([&] { validate_profile(bad); }), ErrorCode::InvalidProfile);
  bad = profiles[1];
  bad.name = "../x";
  EXPECT_EQ(code_of([&] { validate_profile(bad); }), ErrorCode::InvalidProfile);
}
