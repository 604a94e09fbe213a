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

#include "dppost/noise.h"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>

#include "Eigen/Core"
#include "absl/status/status.h"
#include "boost/math/quadrature/gauss_kronrod.hpp"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace dppost {
namespace {

using ::testing::DoubleNear;

TEST(MechanismScaleTest, DividesSensitivityByEpsilon) {
  EXPECT_DOUBLE_EQ(*MechanismScale(1.0, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(*MechanismScale(0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(*MechanismScale(2.0, 0.25), 8.0);
}

TEST(MechanismScaleTest, RejectsNonPositiveEpsilon) {
  EXPECT_EQ(MechanismScale(1.0, 0.0).status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_EQ(MechanismScale(1.0, -2.0).status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_FALSE(MechanismScale(-1.0, 1.0).ok());
}

TEST(NoiseSpecTest, ValidatesParameters) {
  EXPECT_FALSE(NoiseSpec::Laplace(0.0).ok());
  EXPECT_FALSE(NoiseSpec::Laplace(-1.0).ok());
  EXPECT_FALSE(NoiseSpec::Laplace(std::nan("")).ok());
  EXPECT_FALSE(NoiseSpec::TwoSidedGeometric(0.0).ok());
  EXPECT_FALSE(NoiseSpec::TwoSidedGeometric(1.0).ok());
  EXPECT_TRUE(NoiseSpec::TwoSidedGeometric(0.5).ok());
}

TEST(NoiseSpecTest, MechanismKeepsProvenance) {
  absl::StatusOr<NoiseSpec> spec = NoiseSpec::LaplaceMechanism(1.0, 0.5);
  ASSERT_TRUE(spec.ok());
  EXPECT_EQ(spec->scale(), 2.0);
  ASSERT_TRUE(spec->provenance().has_value());
  EXPECT_EQ(spec->provenance()->sensitivity, 1.0);
  EXPECT_EQ(spec->provenance()->epsilon, 0.5);

  absl::StatusOr<NoiseSpec> geom = NoiseSpec::GeometricMechanism(1.0, 0.5);
  ASSERT_TRUE(geom.ok());
  EXPECT_DOUBLE_EQ(geom->scale(), std::exp(-0.5));
}

TEST(NoiseFamilyTest, NamesRoundTrip) {
  for (NoiseFamily f : {NoiseFamily::kLaplace, NoiseFamily::kTwoSidedGeometric}) {
    EXPECT_EQ(*ParseNoiseFamily(NoiseFamilyName(f)), f);
  }
  EXPECT_FALSE(ParseNoiseFamily("gaussian").ok());
}

TEST(LaplacePdfTest, KnownValues) {
  EXPECT_DOUBLE_EQ(LaplacePdf(0.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(LaplacePdf(2.0, 2.0), 0.25 * std::exp(-1.0));
  EXPECT_NEAR(LaplacePdf(2.0, 2.0), 0.09197, 1e-5);
  EXPECT_EQ(LaplacePdf(-3.0, 1.5), LaplacePdf(3.0, 1.5));
}

TEST(LaplacePdfTest, IntegratesToOne) {
  const double lambda = 2.0;
  auto pdf = [&](double x) { return LaplacePdf(x, lambda); };
  // Split at the kink so each half is smooth.
  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double mass = Quadrature::integrate(pdf, -80.0, 0.0, 15, 1e-13) +
                      Quadrature::integrate(pdf, 0.0, 80.0, 15, 1e-13);
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(GeometricPmfTest, KnownValuesAndNormalization) {
  EXPECT_DOUBLE_EQ(GeometricPmf(0, 0.5), 1.0 / 3.0);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(GeometricPmf(k, 0.3), GeometricPmf(-k, 0.3));
  }
  double sum = 0.0;
  for (int k = -50; k <= 50; ++k) sum += GeometricPmf(k, 0.5);
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(RngStreamTest, DeterministicPerStream) {
  RngStream a(42, 7);
  RngStream b(42, 7);
  RngStream c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t x = a.NextBits();
    EXPECT_EQ(x, b.NextBits());
    differs = differs || x != c.NextBits();
  }
  EXPECT_TRUE(differs);
}

TEST(RngStreamTest, OpenUniformStaysInside) {
  RngStream rng(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.NextOpenUniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RngStreamTest, NextIntCoversRange) {
  RngStream rng(3, 0);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const int64_t v = rng.NextInt(-3, 3);
    ASSERT_GE(v, -3);
    ASSERT_LE(v, 3);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_EQ(rng.NextInt(5, 5), 5);
}

TEST(DeriveSeedTest, DependsOnPurpose) {
  EXPECT_EQ(DeriveSeed(9, "trials"), DeriveSeed(9, "trials"));
  EXPECT_NE(DeriveSeed(9, "trials"), DeriveSeed(9, "reference"));
  EXPECT_NE(DeriveSeed(9, "trials"), DeriveSeed(10, "trials"));
}

TEST(SampleVectorTest, SameSeedSameVector) {
  const NoiseSpec spec = *NoiseSpec::Laplace(3.0);
  RngStream a(5, 2);
  RngStream b(5, 2);
  const Eigen::VectorXd x = *SampleVector(spec, 3, a);
  const Eigen::VectorXd y = *SampleVector(spec, 3, b);
  EXPECT_EQ(x, y);
}

TEST(SampleVectorTest, RejectsEmpty) {
  RngStream rng(0, 0);
  EXPECT_FALSE(SampleVector(*NoiseSpec::Laplace(1.0), 0, rng).ok());
}

TEST(SampleVectorTest, LaplaceMomentsMatch) {
  const double lambda = 2.0;
  const int n = 1000000;
  RngStream rng(2024, 0);
  const Eigen::VectorXd x = *SampleVector(*NoiseSpec::Laplace(lambda), n, rng);
  const double mean = x.mean();
  EXPECT_LE(std::abs(mean), 3.0 * lambda * std::sqrt(2.0) / std::sqrt(n));

  // Var = 2 lambda^2; SE of the sample variance from the fourth moment
  // E[X^4] = 24 lambda^4.
  const double var = (x.array() - mean).square().sum() / (n - 1);
  const double se = std::sqrt((24.0 - 4.0) * std::pow(lambda, 4) / n);
  EXPECT_LE(std::abs(var - 2.0 * lambda * lambda), 5.0 * se);
}

TEST(SampleVectorTest, GeometricDrawsAreIntegersWithRightMassAtZero) {
  const double a = 0.5;
  const int n = 1000000;
  RngStream rng(77, 3);
  const Eigen::VectorXd x =
      *SampleVector(*NoiseSpec::TwoSidedGeometric(a), n, rng);
  int64_t zeros = 0;
  for (double v : x) {
    ASSERT_EQ(v, std::round(v));
    zeros += v == 0.0;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, (1 - a) / (1 + a), 0.003);
  const double var = x.squaredNorm() / n;
  EXPECT_NEAR(var, NoiseSpec::TwoSidedGeometric(a)->Variance(), 0.03);
}

TEST(SampleVectorTest, GeometricFrequenciesMatchPmf) {
  const double a = 0.7;
  const int n = 400000;
  RngStream rng(8, 1);
  const NoiseSpec spec = *NoiseSpec::TwoSidedGeometric(a);
  std::vector<int64_t> counts(11, 0);
  for (int i = 0; i < n; ++i) {
    const double v = spec.Sample(rng);
    if (std::abs(v) <= 5) ++counts[static_cast<int>(v) + 5];
  }
  for (int k = -5; k <= 5; ++k) {
    const double p = GeometricPmf(k, a);
    EXPECT_THAT(static_cast<double>(counts[k + 5]) / n,
                DoubleNear(p, 5.0 * std::sqrt(p * (1 - p) / n)))
        << "k=" << k;
  }
}

TEST(NoiseSpecTest, DensityDispatchesOnFamily) {
  const NoiseSpec lap = *NoiseSpec::Laplace(1.5);
  EXPECT_EQ(lap.Density(0.7), LaplacePdf(0.7, 1.5));
  const NoiseSpec geo = *NoiseSpec::TwoSidedGeometric(0.4);
  EXPECT_EQ(geo.Density(2.0), GeometricPmf(2, 0.4));
  EXPECT_EQ(geo.Density(0.5), 0.0);
  EXPECT_DOUBLE_EQ(lap.Variance(), 2 * 1.5 * 1.5);
  EXPECT_DOUBLE_EQ(geo.Variance(), 2 * 0.4 / (0.6 * 0.6));
}

}  // namespace
}  // namespace dppost
