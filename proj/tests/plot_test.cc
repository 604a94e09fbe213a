//
// Copyright 2026 The dppost Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dppost/plot.h"

#include <string>
#include <vector>

#include "dppost/noise.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace dppost {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;

TEST(BuildHistogramTest, BinsCoverRange) {
  const std::vector<double> v = {0, 1, 2, 3, 4};
  const Histogram h = *BuildHistogram(v, 4);
  EXPECT_EQ(h.lo, 0.0);
  EXPECT_EQ(h.hi, 4.0);
  EXPECT_THAT(h.counts, ElementsAre(1, 1, 1, 2));
  EXPECT_EQ(h.Total(), 5);
  EXPECT_DOUBLE_EQ(h.BinWidth(), 1.0);
}

TEST(BuildHistogramTest, ConstantSampleAndErrors) {
  const std::vector<double> v = {2, 2, 2};
  const Histogram h = *BuildHistogram(v, 3);
  EXPECT_EQ(h.lo, 1.5);
  EXPECT_EQ(h.hi, 2.5);
  EXPECT_THAT(h.counts, ElementsAre(0, 3, 0));
  EXPECT_FALSE(BuildHistogram(v, 0).ok());
  EXPECT_FALSE(BuildHistogram(std::vector<double>{}, 3).ok());
}

TEST(BuildHistogramTest, SymmetricSampleHasMirroredBins) {
  // Symmetrized Laplace sample: mirrored bins match exactly up to values
  // that land on a bin edge.
  std::vector<double> v;
  RngStream rng(6, 0);
  for (int i = 0; i < 20000; ++i) {
    const double x = SampleLaplace(1.0, rng);
    v.push_back(x);
    v.push_back(-x);
  }
  const Histogram h = *BuildHistogram(v, 40);
  for (size_t k = 0; k < h.counts.size(); ++k) {
    EXPECT_NEAR(h.counts[k], h.counts[h.counts.size() - 1 - k], 2) << k;
  }

  // An independent sample: mirrored bins agree within sampling noise.
  std::vector<double> w;
  for (int i = 0; i < 40000; ++i) w.push_back(SampleLaplace(1.0, rng));
  w.push_back(-20.0);
  w.push_back(20.0);
  const Histogram g = *BuildHistogram(w, 40);
  for (size_t k = 0; k < g.counts.size(); ++k) {
    const double a = g.counts[k];
    const double b = g.counts[g.counts.size() - 1 - k];
    EXPECT_LE(std::abs(a - b), 5 * std::sqrt(a + b + 1)) << k;
  }
}

TEST(ParseResidualCsvTest, GroupsBySweepAndCoordinate) {
  const std::vector<ResidualPanel> panels = *ParseResidualCsv(
      "sweep,trial,coordinate,value\n1,0,0,5\n0,0,1,2\n0,1,1,3\n0,0,0,1\n");
  ASSERT_EQ(panels.size(), 3u);
  EXPECT_EQ(panels[0].label, "sweep 0, coordinate 0");
  EXPECT_EQ(panels[1].label, "sweep 0, coordinate 1");
  EXPECT_THAT(panels[1].values, ElementsAre(2, 3));
  EXPECT_EQ(panels[2].label, "sweep 1, coordinate 0");

  const std::vector<ResidualPanel> flat =
      *ParseResidualCsv("trial,coordinate,value\n0,0,1\n0,1,2\n");
  EXPECT_EQ(flat[1].label, "coordinate 1");
}

TEST(ParseResidualCsvTest, Errors) {
  EXPECT_FALSE(ParseResidualCsv("").ok());
  EXPECT_FALSE(ParseResidualCsv("trial,coordinate,value\n").ok());
  EXPECT_FALSE(ParseResidualCsv("a,b\n1,2\n").ok());
  EXPECT_FALSE(ParseResidualCsv("trial,coordinate,value\n0,x,1\n").ok());
  EXPECT_FALSE(ParseResidualCsv("trial,coordinate,value\n0,0\n").ok());
}

TEST(RenderHistogramSvgTest, TwoPanelsTwoGroups) {
  const std::vector<ResidualPanel> panels = {{"left", {1, 2, 3}},
                                             {"right", {-1, 0, 1, 1}}};
  const std::string svg = *RenderHistogramSvg(panels);
  EXPECT_THAT(svg, HasSubstr("version=\"1.1\""));
  int groups = 0;
  for (size_t pos = svg.find("class=\"histogram\""); pos != std::string::npos;
       pos = svg.find("class=\"histogram\"", pos + 1)) {
    ++groups;
  }
  EXPECT_EQ(groups, 2);
  EXPECT_EQ(*RenderHistogramSvg(panels), svg);
  EXPECT_TRUE(svg.ends_with("</svg>\n"));
}

TEST(RenderHistogramSvgTest, RejectsBadOptions) {
  SvgOptions options;
  options.panel_width = 10;
  EXPECT_FALSE(RenderHistogramSvg({{"x", {1}}}, options).ok());
  EXPECT_FALSE(RenderHistogramSvg({}).ok());
}

}  // namespace
}  // namespace dppost
