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

#ifndef DPPOST_METRICS_H_
#define DPPOST_METRICS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "Eigen/Core"
#include "absl/status/statusor.h"

namespace dppost {

// Per-coordinate mean residual with its standard error (sample standard
// deviation over sqrt(trials)).
struct BiasEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd standard_error;
  int64_t trials = 0;

  // max_i |mean_i| and the coordinate attaining it (first on ties).
  double MaxAbsMean() const;
  Eigen::Index ArgMaxAbsMean() const;

  // True when every coordinate satisfies |mean_i| <= k * SE_i + floor. The
  // floor absorbs rounding on coordinates whose residual is deterministic.
  bool WithinStandardErrors(double k, double floor = 0.0) const;
};

// Accumulates residual rows one trial at a time (Welford updates) so callers
// can stream very large experiments. Rows must be added in a fixed order for
// bit-reproducible results.
class ResidualAccumulator {
 public:
  explicit ResidualAccumulator(Eigen::Index dimension);

  void Add(const Eigen::Ref<const Eigen::VectorXd>& row);

  int64_t count() const { return count_; }

  // Fails when fewer than two rows were added.
  absl::StatusOr<BiasEstimate> Finish() const;

 private:
  int64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// Column means and standard errors of a T x n residual matrix. T >= 2.
absl::StatusOr<BiasEstimate> EmpiricalBias(const Eigen::MatrixXd& residuals);

// Unbiased sample variance. Needs at least two samples.
absl::StatusOr<double> EmpiricalVariance(std::span<const double> samples);

struct VarianceEstimate {
  double variance = 0.0;
  // Delta-method standard error sqrt((m4 - s^4) / T).
  double standard_error = 0.0;
  int64_t samples = 0;
};
absl::StatusOr<VarianceEstimate> EstimateVariance(
    std::span<const double> samples);

// Empirical 1-Wasserstein distance. Equal-size samples use matched order
// statistics (exact); otherwise both empirical quantile functions are
// evaluated on a common grid of 4096 midpoints. Inputs need not be sorted.
absl::StatusOr<double> Wasserstein1(std::span<const double> a,
                                    std::span<const double> b);

// Same, for inputs the caller has already sorted ascending.
absl::StatusOr<double> Wasserstein1Sorted(std::span<const double> a,
                                          std::span<const double> b);

}  // namespace dppost

#endif  // DPPOST_METRICS_H_
