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

#include "dppost/constraints.h"

#include <string>
#include <vector>

#include "Eigen/Core"
#include "Eigen/LU"
#include "absl/status/status.h"
#include "dppost/hierarchy_io.h"
#include "dppost/noise.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_instances.h"

namespace dppost {
namespace {

using ::testing::ElementsAre;
using ::testing::IsEmpty;
using ::testing::SizeIs;

TEST(LinearSystemTest, ValidatesShapes) {
  EXPECT_TRUE(LinearSystem::Create(Eigen::MatrixXd::Ones(1, 3),
                                   Eigen::VectorXd::Ones(1), false)
                  .ok());
  EXPECT_FALSE(LinearSystem::Create(Eigen::MatrixXd::Ones(2, 3),
                                    Eigen::VectorXd::Ones(1), false)
                   .ok());
  EXPECT_FALSE(LinearSystem::Create(Eigen::MatrixXd(0, 3), Eigen::VectorXd(0),
                                    false)
                   .ok());
  Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(1, 2);
  bad(0, 1) = std::nan("");
  EXPECT_FALSE(LinearSystem::Create(bad, Eigen::VectorXd::Ones(1), false).ok());
}

TEST(HierarchyTest, RejectsMalformedTrees) {
  // Two roots.
  EXPECT_FALSE(Hierarchy::Create({{"a", "", 1}, {"b", "", 1}}).ok());
  // Unknown parent.
  EXPECT_FALSE(Hierarchy::Create({{"a", "", 1}, {"b", "zz", 1}}).ok());
  // Duplicate id.
  EXPECT_FALSE(Hierarchy::Create({{"a", "", 2}, {"b", "a", 1}, {"b", "a", 1}})
                   .ok());
  // Negative count.
  EXPECT_FALSE(Hierarchy::Create({{"a", "", -1}}).ok());
  // Parent sum mismatch.
  EXPECT_FALSE(Hierarchy::Create({{"a", "", 10}, {"b", "a", 4}, {"c", "a", 5}})
                   .ok());
  // Cycle detached from the root.
  EXPECT_FALSE(Hierarchy::Create(
                   {{"r", "", 0}, {"x", "y", 0}, {"y", "x", 0}})
                   .ok());
  EXPECT_FALSE(Hierarchy::Create({}).ok());
}

TEST(HierarchyTest, AcceptsSumsWithinRelativeTolerance) {
  const double root = 7289112.0;
  EXPECT_TRUE(Hierarchy::Create({{"r", "", root},
                                 {"a", "r", root - 100.0 + 1e-4},
                                 {"b", "r", 100.0}})
                  .ok());
  EXPECT_FALSE(Hierarchy::Create({{"r", "", root},
                                  {"a", "r", root - 100.0 + 0.1},
                                  {"b", "r", 100.0}})
                   .ok());
}

TEST(HierarchyTest, BreadthFirstOrderKeepsChildOrder) {
  const Hierarchy h = *Hierarchy::Create({{"c2", "s", 2},
                                          {"r", "", 5},
                                          {"c1", "s", 1},
                                          {"s", "r", 3},
                                          {"t", "r", 2}});
  std::vector<std::string> ids;
  for (const HierarchyNode& node : h.nodes()) ids.push_back(node.id);
  EXPECT_THAT(ids, ElementsAre("r", "s", "t", "c2", "c1"));
  EXPECT_EQ(h.nodes()[3].level, 2);
  EXPECT_THAT(h.LeafIndices(), ElementsAre(2, 3, 4));
}

TEST(HierarchyToSystemTest, TwoLevelTree) {
  const Hierarchy h =
      *Hierarchy::Create({{"r", "", 10}, {"a", "r", 4}, {"b", "r", 6}});
  const HierarchySystem hs = *HierarchyToSystem(h, false);
  Eigen::MatrixXd expected_a(2, 3);
  expected_a << 1, 0, 0, -1, 1, 1;
  EXPECT_EQ(hs.system.a, expected_a);
  EXPECT_EQ(hs.system.b, Eigen::Vector2d(10, 0));
  EXPECT_TRUE(hs.system.nonneg);
  EXPECT_THAT(*CheckFeasible(h.Counts(), hs.system, 1e-9), IsEmpty());
}

TEST(HierarchyToSystemTest, SingleRoot) {
  const Hierarchy h = *Hierarchy::Create({{"r", "", 7}});
  const HierarchySystem hs = *HierarchyToSystem(h, false);
  EXPECT_EQ(hs.system.a, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_EQ(hs.system.b, Eigen::VectorXd::Constant(1, 7.0));
}

TEST(HierarchyToSystemTest, ThreeLevelCensusTree) {
  const Hierarchy h = fixtures::SmallCensusTree();
  const HierarchySystem hs = *HierarchyToSystem(h, false);
  EXPECT_EQ(hs.system.cols(), 8);
  EXPECT_EQ(hs.system.rows(), 4);
  const Eigen::VectorXd x = h.Counts();
  EXPECT_LE((hs.system.a * x - hs.system.b).lpNorm<Eigen::Infinity>(),
            h.ConsistencyTolerance());
  EXPECT_EQ(x[0], 310.0);
}

TEST(HierarchyToSystemTest, LeavesOnlyIsASimplex) {
  const Hierarchy h = fixtures::SmallCensusTree();
  const HierarchySystem hs = *HierarchyToSystem(h, true);
  EXPECT_EQ(hs.system.rows(), 1);
  EXPECT_EQ(hs.system.cols(), 5);
  EXPECT_EQ(hs.system.a, Eigen::MatrixXd::Ones(1, 5));
  EXPECT_EQ(hs.system.b[0], 310.0);
  EXPECT_THAT(hs.variable_nodes, ElementsAre(3, 4, 5, 6, 7));
}

TEST(HierarchyTest, ShiftLeavesRecomputesParents) {
  const Hierarchy h = fixtures::SmallCensusTree();
  const Hierarchy shifted = *h.ShiftLeaves(10.0);
  EXPECT_EQ(shifted.Counts()[0], 360.0);
  EXPECT_EQ(shifted.Counts()[2], 155.0 + 30.0);
  EXPECT_EQ(shifted.Counts().minCoeff(), 25.0);
  EXPECT_FALSE(h.ShiftLeaves(-100.0).ok());
}

TEST(CheckFeasibleTest, ReportsRowAndSignViolations) {
  const LinearSystem sys = *LinearSystem::Create(
      Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Constant(1, 2.0), true);
  EXPECT_THAT(*CheckFeasible(Eigen::Vector2d(1, 1), sys, 1e-6), IsEmpty());

  const std::vector<Violation> row = *CheckFeasible(Eigen::Vector2d(1.5, 1), sys, 1e-6);
  ASSERT_THAT(row, SizeIs(1));
  EXPECT_EQ(row[0].constraint_index, 0);
  EXPECT_DOUBLE_EQ(row[0].residual, 0.5);

  const std::vector<Violation> sign =
      *CheckFeasible(Eigen::Vector2d(3, -1), sys, 1e-6);
  ASSERT_THAT(sign, SizeIs(1));
  EXPECT_EQ(sign[0].constraint_index, 2);
  EXPECT_DOUBLE_EQ(sign[0].residual, 1.0);

  EXPECT_FALSE(CheckFeasible(Eigen::Vector3d(1, 1, 0), sys, 1e-6).ok());
}

TEST(CheckFeasibleTest, NoisyDataIsInfeasible) {
  const Hierarchy h = fixtures::SmallCensusTree();
  const HierarchySystem hs = *HierarchyToSystem(h, false);
  const NoiseSpec noise = *NoiseSpec::Laplace(1.0);
  int infeasible = 0;
  for (int t = 0; t < 200; ++t) {
    RngStream rng(1, t);
    const Eigen::VectorXd noisy = h.Counts() + *SampleVector(noise, 8, rng);
    infeasible += !CheckFeasible(noisy, hs.system, 1e-9)->empty();
  }
  EXPECT_EQ(infeasible, 200);
}

TEST(ReflectTest, PointReflection) {
  const Eigen::Vector2d x(3, 1.5);
  const Eigen::VectorXd r = *Reflect(x, Eigen::Vector2d(1.7, 3.4));
  EXPECT_NEAR(r[0], 4.3, 1e-12);
  EXPECT_NEAR(r[1], -0.4, 1e-12);
  EXPECT_EQ(*Reflect(x, x), Eigen::VectorXd(x));
  EXPECT_FALSE(Reflect(x, Eigen::Vector3d(1, 2, 3)).ok());
}

TEST(ReflectTest, InvolutionAndFeasibility) {
  RngStream rng(12, 0);
  for (int t = 0; t < 50; ++t) {
    fixtures::RandomInstance inst = fixtures::MakeRandomInstance(rng, 6, 2);
    const Eigen::VectorXd u = *SampleVector(*NoiseSpec::Laplace(3.0), 6, rng);
    const Eigen::VectorXd back = *Reflect(inst.truth, *Reflect(inst.truth, u));
    EXPECT_LE((back - u).lpNorm<Eigen::Infinity>(), 1e-12);

    // A feasible point reflected through feasible x stays on {Av = b}.
    Eigen::VectorXd kernel = Eigen::VectorXd::Zero(6);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(inst.system.a);
    if (lu.kernel().cols() > 0) kernel = lu.kernel().col(0);
    const Eigen::VectorXd v = inst.truth + 2.5 * kernel;
    const Eigen::VectorXd r = *Reflect(inst.truth, v);
    EXPECT_LE((inst.system.a * r - inst.system.b).lpNorm<Eigen::Infinity>(),
              1e-9);
  }
}

TEST(HierarchyIoTest, CsvRoundTrip) {
  const Hierarchy h = fixtures::SmallCensusTree();
  const std::string csv = FormatHierarchyCsv(h);
  EXPECT_TRUE(csv.starts_with("id,parent_id,count\nus,,310\n"));
  const Hierarchy back = *ParseHierarchyCsv(csv);
  EXPECT_EQ(FormatHierarchyCsv(back), csv);
  EXPECT_EQ(back.Counts(), h.Counts());
}

TEST(HierarchyIoTest, JsonRoundTrip) {
  const Hierarchy h =
      *Hierarchy::Create({{"r", "", 0.75}, {"a", "r", 0.5}, {"b", "r", 0.25}});
  const std::string json = FormatHierarchyJson(h);
  const Hierarchy back = *ParseHierarchyJson(json);
  EXPECT_EQ(FormatHierarchyJson(back), json);
  EXPECT_EQ(FormatHierarchyCsv(back), FormatHierarchyCsv(h));
}

TEST(HierarchyIoTest, ParsesNestedJson) {
  const Hierarchy h = *ParseHierarchyJson(
      R"({"id": "r", "count": 3, "children": [{"id": "x", "count": 1},
          {"id": "y", "count": 2, "children": []}]})");
  EXPECT_EQ(h.size(), 3u);
  EXPECT_EQ(h.nodes()[2].id, "y");
}

TEST(HierarchyIoTest, RejectsBadInput) {
  EXPECT_FALSE(ParseHierarchyCsv("a,b,c\nr,,1\n").ok());
  EXPECT_FALSE(ParseHierarchyCsv("id,parent_id,count\nr,,abc\n").ok());
  EXPECT_FALSE(ParseHierarchyCsv("id,parent_id,count\nr,1\n").ok());
  EXPECT_FALSE(ParseHierarchyJson("[1,2]").ok());
  EXPECT_FALSE(ParseHierarchyJson("{\"id\": 1}").ok());
}

TEST(FormatDoubleTest, ShortestRoundTrip) {
  EXPECT_EQ(FormatDouble(2.0), "2");
  EXPECT_EQ(FormatDouble(0.1), "0.1");
  EXPECT_EQ(*ParseDouble(FormatDouble(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(*ParseDouble("+2.5"), 2.5);
  EXPECT_FALSE(ParseDouble("2.5x").ok());
  EXPECT_FALSE(ParseDouble("").ok());
}

}  // namespace
}  // namespace dppost
