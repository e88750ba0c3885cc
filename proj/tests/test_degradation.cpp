#include <gtest/gtest.h>

#include <fstream>

#include "freqsr/data.hpp"
#include "freqsr/degradation.hpp"
#include "freqsr/errors.hpp"
#include "freqsr/image.hpp"
#include "test_util.hpp"

using namespace freqsr;

namespace {

std::vector<double> padded(std::vector<double> head, double fill) {
  head.resize(64, fill);
  return head;
}

std::vector<AnalysisPair> corpus_pairs(const std::vector<double>& scales) {
  std::vector<AnalysisPair> pairs;
  for (const auto& file : list_images(testutil::data_dir() / "analysis")) {
    const auto hr = to_luminance(load_image(file));
    for (const double r : scales) pairs.push_back({hr, degrade(hr, r), r});
  }
  return pairs;
}

}  // namespace

TEST(SpectralDegradation, Examples) {
  BlockSpectrum hr{};
  BlockSpectrum lr{};
  for (int i = 0; i < 64; ++i) hr[i] = lr[i] = 0.1 * (i + 1);
  for (const double d : spectral_degradation(hr, lr)) EXPECT_EQ(d, 0.0);
  hr[0] = 2.0;
  lr[0] = 1.0;
  hr[5] = 0.0;
  lr[5] = 1.0;
  const auto f_d = spectral_degradation(hr, lr);
  EXPECT_DOUBLE_EQ(f_d[0], 0.5);
  EXPECT_DOUBLE_EQ(f_d[5], 1.0 / kDegradationEps);
  EXPECT_TRUE(std::isfinite(f_d[5]));
}

TEST(FindVfp, PrefixCountExamples) {
  EXPECT_EQ(find_vfp(padded({0.1, 0.2, 0.5, 0.1}, 0.0), 0.3), 2);
  EXPECT_EQ(find_vfp(padded({}, 0.0), 0.01), 64);
  EXPECT_EQ(find_vfp(padded({0.4}, 0.0), 0.3), 0);
  EXPECT_EQ(find_vfp(padded({0.3}, 0.0), 0.3), 0);  // strictly below
  EXPECT_THROW(find_vfp(padded({}, 0.0), 0.0), RangeError);
}

TEST(FindVfp, FirstDegradedPointIsOneBasedAndSaturates) {
  EXPECT_EQ(first_degraded_point(padded({0.1, 0.2, 0.5}, 0.0), 0.3), 3);
  EXPECT_EQ(first_degraded_point(padded({0.4}, 0.0), 0.3), 1);
  EXPECT_EQ(first_degraded_point(padded({}, 0.0), 0.3), 64);
}

TEST(FindVfp, MonotoneInThreshold) {
  torch::manual_seed(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = torch::rand({64}, torch::kFloat64);
    const std::vector<double> f_d(v.data_ptr<double>(), v.data_ptr<double>() + 64);
    int previous = 0;
    for (double t = 0.05; t <= 1.05; t += 0.05) {
      const int f = find_vfp(f_d, t);
      EXPECT_GE(f, previous);
      previous = f;
    }
  }
}

TEST(Histogram, CountsAndFractions) {
  VfpHistogram h;
  for (int i = 0; i < 10; ++i) h.add(2);
  h.add(5);
  EXPECT_EQ(h.total_blocks, 11);
  EXPECT_NEAR(h.fraction_in(2, 4), 10.0 / 11.0, 1e-15);
  EXPECT_EQ(h.min_vfp(), 2);
  EXPECT_EQ(h.max_vfp(), 5);
  EXPECT_THROW(h.add(65), RangeError);
}

TEST(Profile, IdenticalPairsPutAllMassAt64) {
  torch::manual_seed(8);
  const auto img = torch::rand({40, 48}, torch::kFloat64);
  const std::vector<AnalysisPair> pairs{{img, img, 2.0}};
  const auto hists = profile_corpus(pairs, {{2.0, 0.3}});
  ASSERT_EQ(hists.size(), 1u);
  EXPECT_EQ(hists[0].total_blocks, 30);
  EXPECT_EQ(hists[0].counts.at(64), 30);
}

TEST(Profile, TotalsEqualProcessedBlocks) {
  torch::manual_seed(9);
  auto img = torch::rand({45, 70}, torch::kFloat64);
  img.slice(0, 0, 8).slice(1, 0, 8).fill_(0.5);  // one flat block
  const std::vector<AnalysisPair> pairs{{img, degrade(img, 2.0), 2.0}, {img, degrade(img, 3.0), 3.0}};
  const auto hists = profile_corpus(pairs, {{2.0, 0.09}, {3.0, 0.2}});
  ASSERT_EQ(hists.size(), 2u);
  for (const auto& h : hists) {
    EXPECT_EQ(h.total_blocks + h.skipped_blocks, 5 * 8);
    EXPECT_EQ(h.skipped_blocks, 1);
    int64_t sum = 0;
    for (const auto& [v, c] : h.counts) sum += c;
    EXPECT_EQ(sum, h.total_blocks);
  }
  EXPECT_THROW(profile_corpus(pairs, {{2.0, 0.09}}), ConfigError);
}

TEST(Profile, MeanVfpShrinksWithScaleOnCorpus) {
  const auto hists = profile_corpus(corpus_pairs({2.0, 4.0}), {{2.0, 0.3}, {4.0, 0.3}});
  ASSERT_EQ(hists.size(), 2u);
  EXPECT_LE(hists[1].mean_vfp(), hists[0].mean_vfp());
}

TEST(Export, CsvFormatAndRoundTrip) {
  testutil::TempDir tmp("hist");
  VfpHistogram h;
  h.scale = 2.0;
  h.threshold = 0.09;
  for (int i = 0; i < 10; ++i) h.add(2);
  std::vector<VfpHistogram> one{h};
  export_histograms(one, tmp / "h.csv");
  std::ifstream in(tmp / "h.csv");
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "scale,threshold,vfp,count,fraction");
  EXPECT_EQ(row, "2,0.09,2,10,1");
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_TRUE(std::filesystem::exists(tmp / "h.json"));

  std::vector<VfpHistogram> none;
  export_histograms(none, tmp / "empty.csv");
  std::ifstream empty(tmp / "empty.csv");
  std::getline(empty, header);
  EXPECT_FALSE(std::getline(empty, extra));

  VfpHistogram g = h;
  g.scale = 3.0;
  g.threshold = 0.2;
  g.add(4);
  std::vector<VfpHistogram> two{h, g};
  export_histograms(two, tmp / "two.csv");
  const auto back = read_histogram_csv(tmp / "two.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].counts, g.counts);
  EXPECT_EQ(back[1].total_blocks, g.total_blocks);
}
