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

#include "dppost/metrics.h"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace dppost {

namespace {

constexpr int kQuantileGrid = 4096;

// Empirical quantile (left-continuous inverse CDF) of a sorted sample.
double SortedQuantile(std::span<const double> sorted, double p) {
  const auto n = static_cast<double>(sorted.size());
  auto index = static_cast<size_t>(std::ceil(p * n)) - 1;
  index = std::min(index, sorted.size() - 1);
  return sorted[index];
}

}  // namespace

double BiasEstimate::MaxAbsMean() const {
  return mean.size() == 0 ? 0.0 : mean.cwiseAbs().maxCoeff();
}

Eigen::Index BiasEstimate::ArgMaxAbsMean() const {
  Eigen::Index index = 0;
  if (mean.size() > 0) mean.cwiseAbs().maxCoeff(&index);
  return index;
}

bool BiasEstimate::WithinStandardErrors(double k, double floor) const {
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    if (!(std::abs(mean[i]) <= k * standard_error[i] + floor)) return false;
  }
  return true;
}

ResidualAccumulator::ResidualAccumulator(Eigen::Index dimension)
    : mean_(Eigen::VectorXd::Zero(dimension)),
      m2_(Eigen::VectorXd::Zero(dimension)) {}

void ResidualAccumulator::Add(const Eigen::Ref<const Eigen::VectorXd>& row) {
  ++count_;
  const Eigen::VectorXd delta = row - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.array() += delta.array() * (row - mean_).array();
}

absl::StatusOr<BiasEstimate> ResidualAccumulator::Finish() const {
  if (count_ < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("bias estimate needs at least 2 trials, got ", count_));
  }
  BiasEstimate out;
  out.mean = mean_;
  const auto t = static_cast<double>(count_);
  out.standard_error = (m2_.array() / (t - 1.0) / t).sqrt();
  out.trials = count_;
  return out;
}

absl::StatusOr<BiasEstimate> EmpiricalBias(const Eigen::MatrixXd& residuals) {
  ResidualAccumulator acc(residuals.cols());
  for (Eigen::Index t = 0; t < residuals.rows(); ++t) {
    acc.Add(residuals.row(t).transpose());
  }
  return acc.Finish();
}

absl::StatusOr<double> EmpiricalVariance(std::span<const double> samples) {
  absl::StatusOr<VarianceEstimate> est = EstimateVariance(samples);
  if (!est.ok()) return est.status();
  return est->variance;
}

absl::StatusOr<VarianceEstimate> EstimateVariance(
    std::span<const double> samples) {
  if (samples.size() < 2) {
    return absl::InvalidArgumentError(absl::StrCat(
        "variance needs at least 2 samples, got ", samples.size()));
  }
  const auto t = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= t;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double s : samples) {
    const double d2 = (s - mean) * (s - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  VarianceEstimate out;
  out.variance = m2 / (t - 1.0);
  const double biased = m2 / t;
  out.standard_error = std::sqrt(std::max(0.0, m4 / t - biased * biased) / t);
  out.samples = static_cast<int64_t>(samples.size());
  return out;
}

absl::StatusOr<double> Wasserstein1(std::span<const double> a,
                                    std::span<const double> b) {
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return Wasserstein1Sorted(sa, sb);
}

absl::StatusOr<double> Wasserstein1Sorted(std::span<const double> a,
                                          std::span<const double> b) {
  if (a.empty() || b.empty()) {
    return absl::InvalidArgumentError("Wasserstein distance of an empty sample");
  }
  double total = 0.0;
  if (a.size() == b.size()) {
    for (size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
  }
  for (int k = 0; k < kQuantileGrid; ++k) {
    const double p = (k + 0.5) / kQuantileGrid;
    total += std::abs(SortedQuantile(a, p) - SortedQuantile(b, p));
  }
  return total / kQuantileGrid;
}

}  // namespace dppost
