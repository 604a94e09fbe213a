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

#ifndef DPPOST_ANALYSIS_H_
#define DPPOST_ANALYSIS_H_

#include <cstdint>

#include "Eigen/Core"
#include "absl/status/statusor.h"
#include "dppost/constraints.h"
#include "dppost/noise.h"

namespace dppost {

// Probability that n i.i.d. noise draws land in the l1-ball of radius r
// around zero. For Laplace noise `scale` is lambda.
struct BallProbabilityQuery {
  double radius = 0.0;
  int dimension = 1;
  double scale = 1.0;
};

// 1 - exp(-r/lambda) * sum_{i<n} (r/lambda)^i / i!, i.e. the Gamma(n, lambda)
// CDF at r. Terms are accumulated in log space from the dominant end so the
// result stays accurate for n in the thousands.
absl::StatusOr<double> L1BallProbLaplace(const BallProbabilityQuery& q);

// The complement, exp(-r/lambda) * sum_{i<n} (r/lambda)^i / i!, computed
// directly rather than as 1 - probability so tiny tails keep their digits.
absl::StatusOr<double> L1BallTailLaplace(const BallProbabilityQuery& q);

// Two-sided geometric analog:
//   1 - (2 a^{r+1} / (1 + a)) * sum_{i<n} h_i(r) ((1 - a) / (1 + a))^i
// with h_0 = 1 and h_{i+1}(r) = sum_{v=-r}^{r} h_i(r - |v|).
absl::StatusOr<double> L1BallProbGeometric(int64_t radius, double a,
                                           int dimension);
absl::StatusOr<double> L1BallTailGeometric(int64_t radius, double a,
                                           int dimension);

// h_i(r): the number of integer points of the i-dimensional l1-ball of
// radius r. Values are memoized in a process-wide table and kept as exact
// 64-bit integers until they overflow; past that they are doubles and
// `relative_error` bounds the accumulated rounding.
struct LatticeCount {
  double value = 0.0;
  bool exact = true;
  double relative_error = 0.0;
};
LatticeCount LatticeBallCount(int i, int64_t radius);

struct BiasBoundInputs {
  // Smallest true count r_m.
  double min_true_count = 0.0;
  double scale = 1.0;
  int dimension = 1;
  // sup over K of ||v - x||_inf.
  double c_prime = 0.0;
};

// C' * Pr(||eta||_1 > r_m) for Laplace noise.
absl::StatusOr<double> BiasBound(const BiasBoundInputs& inputs);

// The same bound for two-sided geometric noise: `scale` is the ratio a and
// the ball radius is floor(r_m).
absl::StatusOr<double> BiasBoundGeometric(const BiasBoundInputs& inputs);

// sup_{v in K} ||v - x||_inf for the shapes where it is known exactly:
//   * a single row c * sum v = b with v >= 0 (scaled simplex):
//       max_i max(x_i, b/c - x_i);
//   * a hierarchy system (one pinned variable, parent-sum rows forming a
//     tree, v >= 0): every non-pinned node ranges over [0, root total], the
//     pinned root does not move.
// Anything else returns Unimplemented; callers then supply C' themselves.
absl::StatusOr<double> SupDistanceCprime(const LinearSystem& sys,
                                         const Eigen::VectorXd& x);

// Variance of a single coordinate's (P_S) residual under Laplace(lambda)
// noise: 2 lambda^2 (1 - 1/n).
absl::StatusOr<double> MarginalErrorVariance(double lambda, int n);

// One draw of ((n-1) eta_1 - sum_{j>1} eta_j) / n with eta_j i.i.d.
// Laplace(lambda).
double SampleMarginalError(double lambda, int n, RngStream& rng);

// Generalization used by the harness: residual of coordinate 0 of (P_S)
// under any noise spec.
double SampleMarginalError(const NoiseSpec& spec, int n, RngStream& rng);

}  // namespace dppost

#endif  // DPPOST_ANALYSIS_H_
