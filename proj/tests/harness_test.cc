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

#include "dppost/harness.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "dppost/analysis.h"
#include "dppost/projection.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_instances.h"

namespace dppost {
namespace {

using ::testing::HasSubstr;
using ::testing::StartsWith;

const Gate* FindGate(const ExperimentReport& report, const std::string& name) {
  for (const Gate& g : report.gates) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

TEST(ExperimentKindTest, NamesRoundTrip) {
  for (ExperimentKind k :
       {ExperimentKind::kBiasP, ExperimentKind::kBiasPplusShift,
        ExperimentKind::kConvergencePS, ExperimentKind::kVariancePS,
        ExperimentKind::kBoundCheck}) {
    EXPECT_EQ(*ParseExperimentKind(ExperimentKindName(k)), k);
  }
  EXPECT_FALSE(ParseExperimentKind("bias").ok());
}

TEST(ExperimentConfigTest, ParsesAndFormatsCanonically) {
  const ExperimentConfig config = *ParseExperimentConfig(R"(
    # shift sweep
    kind = bias_Pplus_shift
    branching = 3, 4
    leaf_min = 348
    leaf_max = 1000
    noise_family = laplace
    sensitivity = 1
    epsilon = 0.5
    trials = 500
    master_seed = 18446744073709551615
    shift_factors = 0, 4, 10.5
    write_residuals = false
  )");
  EXPECT_EQ(config.kind, ExperimentKind::kBiasPplusShift);
  EXPECT_EQ(config.noise.scale(), 2.0);
  EXPECT_EQ(config.master_seed, 18446744073709551615ull);
  EXPECT_THAT(config.shift_factors, ::testing::ElementsAre(0, 4, 10.5));
  EXPECT_FALSE(config.write_residuals);
  const std::string text = FormatExperimentConfig(config);
  EXPECT_THAT(text, HasSubstr("epsilon = 0.5\n"));
  EXPECT_EQ(FormatExperimentConfig(*ParseExperimentConfig(text)), text);
}

TEST(ExperimentConfigTest, RejectsInvalidConfigs) {
  EXPECT_FALSE(ParseExperimentConfig("kind = bias_P\nnoise_scale = 1\n"
                                     "trials = 1\n")
                   .ok());
  EXPECT_FALSE(ParseExperimentConfig("kind = bias_P\nnoise_scale = 1\n"
                                     "colour = red\n")
                   .ok());
  EXPECT_FALSE(ParseExperimentConfig("kind = bias_Pplus_shift\n"
                                     "noise_scale = 1\n")
                   .ok());
  EXPECT_FALSE(ParseExperimentConfig("kind = variance_PS\nnoise_scale = 1\n"
                                     "dimensions = 3\n")
                   .ok());
  EXPECT_FALSE(ParseExperimentConfig("kind = bias_P\n").ok());
  EXPECT_FALSE(ParseExperimentConfig("kind = bias_P\nnoise_scale = 1\n"
                                     "epsilon = 1\n")
                   .ok());
  EXPECT_FALSE(ParseExperimentConfig("kind bias_P\n").ok());
}

TEST(ExperimentConfigTest, VarianceDefaultsToEightyThousandTrials) {
  const ExperimentConfig config = *ParseExperimentConfig(
      "kind = variance_PS\nnoise_scale = 10\ndimensions = 15, 254\n");
  EXPECT_EQ(config.trials, 80000);
  EXPECT_EQ(ParseExperimentConfig("kind = bias_P\nnoise_scale = 1\n")->trials,
            10000);
}

TEST(SyntheticHierarchyTest, ShapeAndDeterminism) {
  SyntheticHierarchySpec spec;
  spec.branching = {2, 3};
  spec.seed = 5;
  const Hierarchy h = *GenerateSyntheticHierarchy(spec);
  EXPECT_EQ(h.size(), 9u);
  const Hierarchy again = *GenerateSyntheticHierarchy(spec);
  EXPECT_EQ(h.Counts(), again.Counts());
  spec.stream = 1;
  EXPECT_NE(GenerateSyntheticHierarchy(spec)->Counts(), h.Counts());
}

TEST(SyntheticHierarchyTest, LeafRangeBoundsMinimum) {
  SyntheticHierarchySpec spec;
  spec.branching = {33};
  spec.leaf_min = 348;
  spec.leaf_max = 1e6;
  const Hierarchy h = *GenerateSyntheticHierarchy(spec);
  EXPECT_GE(h.Counts().minCoeff(), 348.0);
  for (int leaf : h.LeafIndices()) {
    EXPECT_EQ(h.nodes()[leaf].count, std::round(h.nodes()[leaf].count));
  }
  spec.leaf_min = 5;
  spec.leaf_max = 1;
  EXPECT_FALSE(GenerateSyntheticHierarchy(spec).ok());
}

ExperimentConfig SmallBiasConfig() {
  ExperimentConfig config;
  config.kind = ExperimentKind::kBiasP;
  config.synthetic.branching = {2, 3};
  config.synthetic.leaf_min = 0;
  config.synthetic.leaf_max = 20;
  config.noise = *NoiseSpec::Laplace(2.0);
  config.trials = 3000;
  config.master_seed = 21;
  return config;
}

TEST(RunBiasExperimentTest, AffineProjectionIsUnbiased) {
  const ExperimentReport report = *RunExperiment(SmallBiasConfig());
  ASSERT_EQ(report.points.size(), 1u);
  EXPECT_TRUE(report.AllGatesPass()) << ReportToJson(report);
  EXPECT_EQ(report.solver.projections, 3000);
  EXPECT_EQ(report.solver.infeasible_outputs, 0);
  EXPECT_TRUE(report.points[0].c_prime.has_value());
}

TEST(RunBiasExperimentTest, IdenticalAcrossWorkerCounts) {
  const ExperimentConfig config = SmallBiasConfig();
  std::ostringstream r1;
  std::ostringstream r4;
  const ExperimentReport a = *RunExperiment(config, {1, &r1});
  const ExperimentReport b = *RunExperiment(config, {4, &r4});
  EXPECT_EQ(ReportToJson(a), ReportToJson(b));
  EXPECT_EQ(ReportToSummaryCsv(a), ReportToSummaryCsv(b));
  EXPECT_EQ(r1.str(), r4.str());
  EXPECT_THAT(r1.str(), StartsWith("0,0,"));
}

TEST(RunBiasExperimentTest, ZeroCountShowsPositiveBiasThatShiftRemoves) {
  ExperimentConfig config = SmallBiasConfig();
  config.kind = ExperimentKind::kBiasPplusShift;
  config.shift_factors = {0, 4, 10, 2.0 * 20 * 9};
  const Hierarchy h = *Hierarchy::FromLeafCounts({{"r", "", 0},
                                                  {"a", "r", 0},
                                                  {"b", "r", 0},
                                                  {"a1", "a", 0},
                                                  {"a2", "a", 12},
                                                  {"b1", "b", 30},
                                                  {"b2", "b", 7}});
  const ExperimentReport report = *RunBiasExperiment(config, h);
  ASSERT_EQ(report.points.size(), 4u);
  const BiasEstimate& zero = *report.points[0].bias;
  EXPECT_GT(zero.mean[3], 4 * zero.standard_error[3]);
  EXPECT_EQ(zero.ArgMaxAbsMean(), 3);
  EXPECT_TRUE(report.points[3].bias->WithinStandardErrors(4.0, 1e-6));
  EXPECT_TRUE(FindGate(report, "bias_non_increasing")->pass);
  EXPECT_TRUE(FindGate(report, "zero_bias_at_largest_shift")->pass);
  EXPECT_TRUE(FindGate(report, "feasibility")->pass);
  EXPECT_GT(report.solver.clamped_coordinates, 0);
  EXPECT_EQ(report.points[1].min_true_count, 4.0);
}

TEST(MeasureProjectionBiasTest, InfeasibleSystemAborts) {
  const LinearSystem sys = *LinearSystem::Create(
      Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Constant(1, -1.0), true);
  const absl::StatusOr<BiasRun> run =
      MeasureProjectionBias(sys, Eigen::Vector2d(-0.5, -0.5),
                            *NoiseSpec::Laplace(1.0), 100, 1, true);
  EXPECT_TRUE(IsInfeasible(run.status())) << run.status();
}

TEST(RunConvergenceExperimentTest, VarianceAtTwoAndDecreasingDistance) {
  ExperimentConfig config;
  config.kind = ExperimentKind::kConvergencePS;
  config.noise = *NoiseSpec::Laplace(1.0);
  config.dimensions = {2, 5, 50};
  config.trials = 20000;
  config.bootstrap = 20;
  config.master_seed = 4;
  const ExperimentReport report = *RunExperiment(config, {2, nullptr});
  ASSERT_EQ(report.points.size(), 3u);
  EXPECT_NEAR(report.points[0].variance->variance, 1.0,
              4 * report.points[0].variance->standard_error);
  EXPECT_DOUBLE_EQ(*report.points[0].analytic_variance, 1.0);
  EXPECT_GT(*report.points[0].wasserstein, *report.points[2].wasserstein);
  EXPECT_GT(*report.points[0].wasserstein_se, 0.0);
  EXPECT_TRUE(report.AllGatesPass()) << ReportToJson(report);
}

TEST(RunVarianceExperimentTest, RatioLimits) {
  ExperimentConfig config;
  config.kind = ExperimentKind::kVariancePS;
  config.noise = *NoiseSpec::Laplace(1.0);
  config.trials = 2000;
  config.dimensions = {7, 7};
  ExperimentReport same = *RunExperiment(config);
  EXPECT_EQ(*same.points[0].analytic_variance, *same.points[1].analytic_variance);
  EXPECT_EQ(same.points[0].variance->variance, same.points[1].variance->variance);

  config.dimensions = {2, 10000};
  config.trials = 200;
  ExperimentReport limit = *RunExperiment(config);
  EXPECT_NEAR(*limit.points[0].analytic_variance /
                  *limit.points[1].analytic_variance,
              0.5 / (1 - 1e-4), 1e-12);
  EXPECT_THAT(FindGate(limit, "variance_ratio")->detail,
              HasSubstr("analytic ratio 0.50005"));
}

TEST(RunBoundCheckTest, ZeroMinimumGivesTrivialBound) {
  ExperimentConfig config;
  config.kind = ExperimentKind::kBoundCheck;
  config.noise = *NoiseSpec::Laplace(1.0);
  config.trials = 500;
  const Hierarchy h =
      *Hierarchy::Create({{"r", "", 5}, {"a", "r", 0}, {"b", "r", 5}});
  const ExperimentReport report = *RunBoundCheck(config, h);
  EXPECT_EQ(*report.points[0].bias_bound, *report.points[0].c_prime);
  EXPECT_EQ(*report.points[0].c_prime, 5.0);
  EXPECT_TRUE(report.AllGatesPass());
}

TEST(RunBoundCheckTest, SmallNoiseRegime) {
  ExperimentConfig config;
  config.kind = ExperimentKind::kBoundCheck;
  config.trials = 2000;
  config.master_seed = 8;
  SyntheticHierarchySpec spec;
  spec.branching = {6};
  spec.leaf_min = 100;
  spec.leaf_max = 200;
  const Hierarchy h = *GenerateSyntheticHierarchy(spec);
  const double r_m = h.Counts().minCoeff();
  config.noise = *NoiseSpec::Laplace(0.1 * r_m / 7);
  const ExperimentReport report = *RunBoundCheck(config, h);
  const SweepPoint& p = report.points[0];
  EXPECT_LE(*p.bias_bound, 1e-3 * *p.c_prime);
  EXPECT_TRUE(p.bias->WithinStandardErrors(4.0, 1e-6));
  EXPECT_TRUE(report.AllGatesPass());
}

TEST(RunBoundCheckTest, ConfiguredCprimeOverrides) {
  ExperimentConfig config;
  config.kind = ExperimentKind::kBoundCheck;
  config.trials = 200;
  config.c_prime = 1.0;
  const Hierarchy h = fixtures::SmallCensusTree();
  const ExperimentReport report = *RunBoundCheck(config, h);
  EXPECT_EQ(*report.points[0].c_prime, 1.0);
}

TEST(ReportFilesTest, WritesThreeFiles) {
  const ExperimentReport report = *RunExperiment(SmallBiasConfig());
  const std::filesystem::path dir =
      std::filesystem::path(::testing::TempDir()) / "dppost_report_files";
  std::filesystem::remove_all(dir);
  ASSERT_TRUE(WriteReportFiles(report, dir.string()).ok());
  for (const char* name : {"report.json", "summary.csv", "timing.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  std::ifstream summary(dir / "summary.csv");
  std::string header;
  std::getline(summary, header);
  EXPECT_EQ(header, "quantity,index,value");
  EXPECT_THAT(ReportToJson(report), ::testing::Not(HasSubstr("wall")));
}

}  // namespace
}  // namespace dppost
