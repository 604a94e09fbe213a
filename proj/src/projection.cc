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

#include "dppost/projection.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "Eigen/Core"
#include "Eigen/QR"
#include "absl/status/status.h"
#include "absl/strings/cord.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "dppost/hierarchy_io.h"

namespace dppost {

namespace {

constexpr char kLastIteratePayload[] = "type.dppost/last_iterate";

// Sweeps between active-set attempts once the first few have failed.
constexpr int kActiveSetPeriod = 4;
// Window for detecting a stalled gap between the affine set and the orthant.
constexpr int kStallWindow = 1000;

double InfNorm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

ProjectionResult MakeResult(const Eigen::VectorXd& input,
                            Eigen::VectorXd solution, const Eigen::MatrixXd& a,
                            const Eigen::VectorXd& b, int iterations,
                            bool count_active) {
  ProjectionResult r;
  r.objective = (solution - input).norm();
  r.residual_inf = InfNorm(a * solution - b);
  r.iterations = iterations;
  if (count_active) {
    r.active_nonneg = static_cast<int>((solution.array() == 0.0).count());
  }
  r.solution = std::move(solution);
  return r;
}

absl::Status DimensionCheck(const Eigen::VectorXd& x, Eigen::Index n) {
  if (x.size() != n) {
    return absl::InvalidArgumentError(absl::StrCat(
        "input has ", x.size(), " entries, system has ", n, " variables"));
  }
  if (!x.allFinite()) {
    return absl::InvalidArgumentError("input vector must be finite");
  }
  return absl::OkStatus();
}

absl::Status ConvergenceError(const Eigen::VectorXd& last, int iterations,
                              double gap) {
  absl::Status status = absl::ResourceExhaustedError(absl::StrCat(
      "Dykstra did not converge in ", iterations,
      " iterations (affine/orthant gap ", gap, ")"));
  std::vector<std::string> parts;
  parts.reserve(last.size());
  for (double v : last) parts.push_back(FormatDouble(v));
  status.SetPayload(kLastIteratePayload, absl::Cord(absl::StrJoin(parts, ",")));
  return status;
}

}  // namespace

double SolverOptions::ToleranceFor(const Eigen::VectorXd& input) const {
  return feasibility_tolerance.value_or(1e-8 * (1.0 + InfNorm(input)));
}

bool IsInfeasible(const absl::Status& status) {
  return absl::IsFailedPrecondition(status);
}

bool IsConvergenceFailure(const absl::Status& status) {
  return absl::IsResourceExhausted(status);
}

std::optional<Eigen::VectorXd> LastIterate(const absl::Status& status) {
  auto payload = status.GetPayload(kLastIteratePayload);
  if (!payload) return std::nullopt;
  std::vector<std::string> parts =
      absl::StrSplit(std::string(*payload), ',', absl::SkipEmpty());
  Eigen::VectorXd out(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) {
    absl::StatusOr<double> v = ParseDouble(parts[i]);
    if (!v.ok()) return std::nullopt;
    out[i] = *v;
  }
  return out;
}

absl::StatusOr<AffineProjector> AffineProjector::Create(
    const LinearSystem& sys) {
  if (sys.rows() < 1 || sys.cols() < 1 || sys.b.size() != sys.rows()) {
    return absl::InvalidArgumentError("malformed linear system");
  }
  const Eigen::Index n = sys.cols();
  // Rank-revealing QR of A^T: its leading Q columns span the row space.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sys.a.transpose());
  const Eigen::Index rank = qr.rank();
  Eigen::MatrixXd basis =
      qr.householderQ() * Eigen::MatrixXd::Identity(n, rank);

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sys.a);
  Eigen::VectorXd anchor = cod.solve(sys.b);
  // Keep the anchor exactly in the row space so it is the minimum-norm point.
  anchor = basis * (basis.transpose() * anchor);

  const double residual = InfNorm(sys.a * anchor - sys.b);
  const double tol = 1e-8 * (1.0 + InfNorm(sys.b));
  if (!(residual <= tol)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "constraints A v = b are inconsistent (least-squares residual ",
        residual, ")"));
  }
  return AffineProjector(sys.a, sys.b, std::move(basis), std::move(anchor));
}

Eigen::VectorXd AffineProjector::Apply(const Eigen::VectorXd& x) const {
  return x - basis_ * (basis_.transpose() * (x - anchor_));
}

absl::StatusOr<ProjectionResult> AffineProjector::Project(
    const Eigen::VectorXd& x) const {
  if (absl::Status s = DimensionCheck(x, dimension()); !s.ok()) return s;
  ProjectionResult r = MakeResult(x, Apply(x), a_, b_, 0, false);
  const double tol = 1e-8 * (1.0 + InfNorm(x));
  if (!(r.residual_inf <= tol)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "affine projection residual ", r.residual_inf, " exceeds ", tol));
  }
  return r;
}

absl::StatusOr<NonnegProjector> NonnegProjector::Create(
    const LinearSystem& sys, SolverOptions options) {
  if (options.max_iterations < 1) {
    return absl::InvalidArgumentError("max_iterations must be positive");
  }
  if (options.feasibility_tolerance && !(*options.feasibility_tolerance > 0)) {
    return absl::InvalidArgumentError("feasibility tolerance must be positive");
  }
  absl::StatusOr<AffineProjector> affine = AffineProjector::Create(sys);
  if (!affine.ok()) return affine.status();

  std::optional<double> simplex_weight;
  if (sys.rows() == 1) {
    const double w = sys.a(0, 0);
    if (w > 0.0 && (sys.a.array() == w).all()) simplex_weight = w;
  }
  if (options.backend == SolverBackend::kClosedForm && !simplex_weight) {
    return absl::InvalidArgumentError(
        "closed-form non-negative projection needs a single row with equal "
        "positive coefficients");
  }
  return NonnegProjector(*std::move(affine), options, simplex_weight);
}

std::optional<ProjectionResult> NonnegProjector::TryActiveSet(
    const Eigen::VectorXd& x, const std::vector<bool>& clamped,
    double tol) const {
  const Eigen::MatrixXd& a = affine_.a();
  const Eigen::VectorXd& b = affine_.b();
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> free;
  std::vector<Eigen::Index> fixed;
  for (Eigen::Index i = 0; i < n; ++i) {
    (clamped[i] ? fixed : free).push_back(i);
  }
  if (free.empty()) return std::nullopt;

  const auto nf = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd a_free(a.rows(), nf);
  Eigen::VectorXd x_free(nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    a_free.col(j) = a.col(free[j]);
    x_free[j] = x[free[j]];
  }

  // Projection of x_free onto {A_F v = b}: v = x_F - z with z the
  // minimum-norm solution of A_F z = A_F x_F - b, so z = A_F^T y.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a_free);
  const Eigen::VectorXd z = cod.solve(a_free * x_free - b);
  const Eigen::VectorXd v_free = x_free - z;
  if (!(InfNorm(a_free * v_free - b) <= tol)) return std::nullopt;
  const double sign_slack = 1e-12 * (1.0 + InfNorm(x));
  if (v_free.size() > 0 && v_free.minCoeff() < -sign_slack) {
    return std::nullopt;
  }

  if (!fixed.empty()) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_t(
        a_free.transpose());
    const Eigen::VectorXd y = cod_t.solve(z);
    for (Eigen::Index i : fixed) {
      // Multiplier of v_i >= 0 from stationarity: mu = (A^T y)_i - x_i.
      const double mu = a.col(i).dot(y) - x[i];
      if (mu < -tol) return std::nullopt;
    }
  }

  Eigen::VectorXd solution = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < nf; ++j) {
    solution[free[j]] = std::max(v_free[j], 0.0);
  }
  ProjectionResult r = MakeResult(x, std::move(solution), a, b, 0, true);
  if (!(r.residual_inf <= tol)) return std::nullopt;
  return r;
}

absl::StatusOr<ProjectionResult> NonnegProjector::Project(
    const Eigen::VectorXd& x) const {
  if (absl::Status s = DimensionCheck(x, affine_.dimension()); !s.ok()) {
    return s;
  }
  const double tol = options_.ToleranceFor(x);
  const Eigen::MatrixXd& a = affine_.a();
  const Eigen::VectorXd& b = affine_.b();

  if (options_.backend == SolverBackend::kClosedForm) {
    const double total = b[0] / *simplex_weight_;
    if (total < 0.0) {
      return absl::FailedPreconditionError(
          "sum constraint with negative total has no non-negative solution");
    }
    absl::StatusOr<ProjectionResult> r = ProjectSumNonneg(x, total);
    if (!r.ok()) return r.status();
    return MakeResult(x, std::move(r->solution), a, b, 0, true);
  }

  Eigen::VectorXd affine_point = affine_.Apply(x);
  if (affine_point.minCoeff() >= 0.0) {
    ProjectionResult r =
        MakeResult(x, std::move(affine_point), a, b, 1, true);
    if (r.residual_inf <= tol) return r;
  }

  Eigen::VectorXd current = x;
  Eigen::VectorXd increment = Eigen::VectorXd::Zero(x.size());
  std::vector<bool> last_attempt;
  std::vector<bool> clamped(x.size());
  double window_gap = -1.0;
  double gap = 0.0;
  for (int k = 1; k <= options_.max_iterations; ++k) {
    if (k > 1) affine_point = affine_.Apply(current);
    const Eigen::VectorXd shifted = affine_point + increment;
    Eigen::VectorXd next = shifted.cwiseMax(0.0);
    increment = shifted - next;
    gap = InfNorm(next - affine_point);
    const double step = InfNorm(next - current);
    current = std::move(next);

    for (Eigen::Index i = 0; i < x.size(); ++i) clamped[i] = shifted[i] <= 0.0;
    const bool settled = gap <= tol && step <= tol;
    if ((k <= 3 || k % kActiveSetPeriod == 0 || settled) &&
        clamped != last_attempt) {
      if (std::optional<ProjectionResult> r = TryActiveSet(x, clamped, tol)) {
        r->iterations = k;
        return *std::move(r);
      }
      last_attempt = clamped;
    }
    if (settled) {
      ProjectionResult r = MakeResult(x, current, a, b, k, true);
      if (r.residual_inf <= tol) return r;
    }
    if (k % kStallWindow == 0) {
      if (window_gap >= 0.0 && gap > tol &&
          std::abs(gap - window_gap) <= 1e-9 * gap) {
        return absl::FailedPreconditionError(absl::StrCat(
            "no non-negative point satisfies A v = b: Dykstra gap stalled at ",
            gap));
      }
      window_gap = gap;
    }
  }
  return ConvergenceError(current, options_.max_iterations, gap);
}

absl::StatusOr<ProjectionResult> ProjectAffine(const Eigen::VectorXd& x,
                                               const LinearSystem& sys) {
  absl::StatusOr<AffineProjector> projector = AffineProjector::Create(sys);
  if (!projector.ok()) return projector.status();
  return projector->Project(x);
}

absl::StatusOr<ProjectionResult> ProjectAffineNonneg(
    const Eigen::VectorXd& x, const LinearSystem& sys,
    const SolverOptions& options) {
  absl::StatusOr<NonnegProjector> projector =
      NonnegProjector::Create(sys, options);
  if (!projector.ok()) return projector.status();
  return projector->Project(x);
}

absl::StatusOr<ProjectionResult> ProjectSum(const Eigen::VectorXd& x,
                                            double b) {
  if (x.size() < 1) {
    return absl::InvalidArgumentError("sum projection needs n >= 1");
  }
  const auto n = static_cast<double>(x.size());
  Eigen::VectorXd solution = x.array() + (b - x.sum()) / n;
  ProjectionResult r;
  r.objective = (solution - x).norm();
  r.residual_inf = std::abs(solution.sum() - b);
  r.solution = std::move(solution);
  return r;
}

absl::StatusOr<ProjectionResult> ProjectSumNonneg(const Eigen::VectorXd& x,
                                                  double b) {
  if (x.size() < 1) {
    return absl::InvalidArgumentError("simplex projection needs n >= 1");
  }
  if (!(b >= 0.0)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "infeasible: non-negative vector cannot sum to ", b));
  }
  std::vector<Eigen::Index> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return x[i] > x[j]; });
  double cumulative = 0.0;
  double threshold = x[order[0]];
  for (size_t j = 0; j < order.size(); ++j) {
    cumulative += x[order[j]];
    const double t = (cumulative - b) / static_cast<double>(j + 1);
    if (x[order[j]] - t > 0.0) threshold = t;
  }
  Eigen::VectorXd solution = (x.array() - threshold).cwiseMax(0.0);
  ProjectionResult r;
  r.objective = (solution - x).norm();
  r.residual_inf = std::abs(solution.sum() - b);
  r.active_nonneg = static_cast<int>((solution.array() == 0.0).count());
  r.solution = std::move(solution);
  return r;
}

absl::StatusOr<ProjectionResult> ProjectHierarchy(
    const Eigen::VectorXd& x, const Hierarchy& h,
    const SolverOptions& options) {
  absl::StatusOr<HierarchySystem> hs = HierarchyToSystem(h, false);
  if (!hs.ok()) return hs.status();
  return ProjectAffineNonneg(x, hs->system, options);
}

}  // namespace dppost
