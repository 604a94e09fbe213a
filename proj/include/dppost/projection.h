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

#ifndef DPPOST_PROJECTION_H_
#define DPPOST_PROJECTION_H_

#include <optional>

#include "Eigen/Core"
#include "Eigen/QR"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dppost/constraints.h"

namespace dppost {

enum class SolverBackend { kClosedForm, kDykstra };

struct SolverOptions {
  // Feasibility tolerance; defaults to 1e-8 * (1 + ||input||_inf).
  std::optional<double> feasibility_tolerance;
  int max_iterations = 100000;
  SolverBackend backend = SolverBackend::kDykstra;

  double ToleranceFor(const Eigen::VectorXd& input) const;
};

struct ProjectionResult {
  Eigen::VectorXd solution;
  // ||solution - input||_2.
  double objective = 0.0;
  // 0 for closed-form paths.
  int iterations = 0;
  // ||A solution - b||_inf.
  double residual_inf = 0.0;
  // Coordinates that sit exactly at zero because of the v >= 0 constraint.
  int active_nonneg = 0;
};

// Error helpers. Infeasible problems return FailedPrecondition; exceeding the
// iteration budget returns ResourceExhausted with the last iterate attached.
bool IsInfeasible(const absl::Status& status);
bool IsConvergenceFailure(const absl::Status& status);
std::optional<Eigen::VectorXd> LastIterate(const absl::Status& status);

// Euclidean projection onto {v : A v = b}. The factorization of A is done once
// so repeated projections (Monte Carlo trials) cost O(n r) each, r = rank(A).
class AffineProjector {
 public:
  // Fails with FailedPrecondition when A v = b has no solution.
  static absl::StatusOr<AffineProjector> Create(const LinearSystem& sys);

  // x - A^T y with y the minimum-norm solution of (A A^T) y = A x - b.
  Eigen::VectorXd Apply(const Eigen::VectorXd& x) const;

  absl::StatusOr<ProjectionResult> Project(const Eigen::VectorXd& x) const;

  Eigen::Index rank() const { return basis_.cols(); }
  Eigen::Index dimension() const { return a_.cols(); }
  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }

 private:
  AffineProjector(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::MatrixXd basis,
                  Eigen::VectorXd anchor)
      : a_(std::move(a)),
        b_(std::move(b)),
        basis_(std::move(basis)),
        anchor_(std::move(anchor)) {}

  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  // Orthonormal basis of the row space of A (n x rank).
  Eigen::MatrixXd basis_;
  // Minimum-norm point of the affine set.
  Eigen::VectorXd anchor_;
};

// Euclidean projection onto {v : A v = b, v >= 0}.
//
// The Dykstra backend alternates the exact affine projection with clamping to
// the orthant. Every few sweeps the clamp pattern of the current iterate is
// tried as an active set: the affine projection restricted to the free
// coordinates is accepted once it is non-negative and its multipliers for the
// clamped coordinates certify optimality, which returns the exact minimizer
// instead of a tolerance-level approximation.
//
// The closed-form backend handles only a single row with identical positive
// coefficients (a scaled simplex).
class NonnegProjector {
 public:
  static absl::StatusOr<NonnegProjector> Create(const LinearSystem& sys,
                                                SolverOptions options = {});

  absl::StatusOr<ProjectionResult> Project(const Eigen::VectorXd& x) const;

  const AffineProjector& affine() const { return affine_; }

 private:
  NonnegProjector(AffineProjector affine, SolverOptions options,
                  std::optional<double> simplex_weight)
      : affine_(std::move(affine)),
        options_(options),
        simplex_weight_(simplex_weight) {}

  std::optional<ProjectionResult> TryActiveSet(
      const Eigen::VectorXd& x, const std::vector<bool>& clamped,
      double tol) const;

  AffineProjector affine_;
  SolverOptions options_;
  // Set when every coefficient of a single-row system equals this value.
  std::optional<double> simplex_weight_;
};

// Program (P): projection onto the affine part of `sys` (the nonneg flag is
// ignored).
absl::StatusOr<ProjectionResult> ProjectAffine(const Eigen::VectorXd& x,
                                               const LinearSystem& sys);

// Program (P+): projection onto the affine part of `sys` intersected with the
// non-negative orthant.
absl::StatusOr<ProjectionResult> ProjectAffineNonneg(
    const Eigen::VectorXd& x, const LinearSystem& sys,
    const SolverOptions& options = {});

// Program (P_S): projection onto {v : sum v = b}; closed form
// v_i = x_i + (b - sum x) / n.
absl::StatusOr<ProjectionResult> ProjectSum(const Eigen::VectorXd& x,
                                            double b);

// Projection onto the scaled simplex {v >= 0 : sum v = b} by sorting and
// thresholding. Sort ties are broken by index.
absl::StatusOr<ProjectionResult> ProjectSumNonneg(const Eigen::VectorXd& x,
                                                  double b);

// (P+) on the system generated from `h` (all nodes as variables, root
// pinned). `x` is indexed breadth-first like HierarchyToSystem.
absl::StatusOr<ProjectionResult> ProjectHierarchy(
    const Eigen::VectorXd& x, const Hierarchy& h,
    const SolverOptions& options = {});

}  // namespace dppost

#endif  // DPPOST_PROJECTION_H_
