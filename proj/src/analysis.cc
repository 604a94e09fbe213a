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

#include "dppost/analysis.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace dppost {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
// Upper limit on memoized (dimension + 1) * (radius + 1) entries.
constexpr int64_t kMaxLatticeEntries = 50'000'000;

struct PoissonSplit {
  // Pr(N < n) and Pr(N >= n) for N ~ Poisson(x).
  double lower;
  double upper;
};

double LogPoissonTerm(int64_t i, double x) {
  return -x + static_cast<double>(i) * std::log(x) -
         std::lgamma(static_cast<double>(i) + 1.0);
}

// Sums whichever side of the Poisson distribution does not contain the bulk,
// starting at its largest term, and derives the other side by complement.
PoissonSplit SplitPoisson(int64_t n, double x) {
  if (x == 0.0) return {1.0, 0.0};
  if (x < static_cast<double>(n)) {
    // Upper side: terms t_i for i >= n shrink by x / i.
    double ratio = 1.0;
    double sum = 1.0;
    for (int64_t i = n + 1;; ++i) {
      ratio *= x / static_cast<double>(i);
      sum += ratio;
      if (ratio < kEps * 1e-2 * sum) break;
    }
    const double upper =
        std::min(1.0, std::exp(LogPoissonTerm(n, x) + std::log(sum)));
    return {1.0 - upper, upper};
  }
  // Lower side: terms t_i for i < n shrink by i / x going down.
  double ratio = 1.0;
  double sum = 1.0;
  for (int64_t i = n - 1; i >= 1; --i) {
    ratio *= static_cast<double>(i) / x;
    sum += ratio;
    if (ratio < kEps * 1e-2 * sum) break;
  }
  const double lower =
      std::min(1.0, std::exp(LogPoissonTerm(n - 1, x) + std::log(sum)));
  return {lower, 1.0 - lower};
}

absl::Status ValidateQuery(const BallProbabilityQuery& q) {
  if (!(q.radius >= 0.0) || !std::isfinite(q.radius)) {
    return absl::InvalidArgumentError(
        absl::StrCat("radius must be finite and >= 0, got ", q.radius));
  }
  if (q.dimension < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("dimension must be >= 1, got ", q.dimension));
  }
  if (!(q.scale > 0.0) || !std::isfinite(q.scale)) {
    return absl::InvalidArgumentError(
        absl::StrCat("scale must be positive, got ", q.scale));
  }
  return absl::OkStatus();
}

absl::Status ValidateGeometric(int64_t radius, double a, int dimension) {
  if (radius < 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("radius must be >= 0, got ", radius));
  }
  if (!(a > 0.0 && a < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("ratio must lie in (0, 1), got ", a));
  }
  if (dimension < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("dimension must be >= 1, got ", dimension));
  }
  if (static_cast<int64_t>(dimension) * (radius + 1) > kMaxLatticeEntries) {
    return absl::InvalidArgumentError(absl::StrCat(
        "lattice table for dimension ", dimension, " and radius ", radius,
        " is too large"));
  }
  return absl::OkStatus();
}

// Memo of h_i(r). Rows are rebuilt in full when a larger radius is needed.
class LatticeTable {
 public:
  LatticeCount Get(int i, int64_t radius) {
    std::lock_guard<std::mutex> lock(mu_);
    if (radius > max_radius_) Rebuild(radius);
    while (static_cast<int>(rows_.size()) <= i) AppendRow();
    return rows_[i][radius];
  }

 private:
  void Rebuild(int64_t radius) {
    max_radius_ = std::max<int64_t>(radius, 2 * max_radius_);
    const size_t dims = std::max<size_t>(rows_.size(), 1);
    rows_.clear();
    rows_.push_back(std::vector<LatticeCount>(max_radius_ + 1,
                                              LatticeCount{1.0, true, 0.0}));
    exact_.assign(1, std::vector<uint64_t>(max_radius_ + 1, 1));
    while (rows_.size() < dims) AppendRow();
  }

  // h_{i+1}(r) = h_i(r) + 2 * sum_{s<r} h_i(s).
  void AppendRow() {
    const std::vector<LatticeCount>& prev = rows_.back();
    const std::vector<uint64_t>& prev_exact = exact_.back();
    std::vector<LatticeCount> row(max_radius_ + 1);
    std::vector<uint64_t> row_exact(max_radius_ + 1, 0);
    uint64_t prefix_exact = 0;
    bool prefix_ok = true;
    double prefix = 0.0;
    double prefix_error = 0.0;
    for (int64_t r = 0; r <= max_radius_; ++r) {
      LatticeCount& out = row[r];
      uint64_t twice = 0;
      uint64_t total = 0;
      const bool ok = prefix_ok && prev[r].exact &&
                      !__builtin_mul_overflow(prefix_exact, 2, &twice) &&
                      !__builtin_add_overflow(prev_exact[r], twice, &total);
      if (ok) {
        out = {static_cast<double>(total), true, 0.0};
        row_exact[r] = total;
        // Conversion of a 64-bit integer to double may round.
        if (total > (uint64_t{1} << 53)) out.relative_error = kEps;
      } else {
        out.value = prev[r].value + 2.0 * prefix;
        out.exact = false;
        out.relative_error =
            std::max(prev[r].relative_error, prefix_error) + 2.0 * kEps;
      }
      prefix += prev[r].value;
      prefix_error =
          std::max(prefix_error, prev[r].relative_error) +
          static_cast<double>(r + 1) * kEps;
      prefix_ok = prefix_ok && prev[r].exact &&
                  !__builtin_add_overflow(prefix_exact, prev_exact[r],
                                          &prefix_exact);
    }
    rows_.push_back(std::move(row));
    exact_.push_back(std::move(row_exact));
  }

  std::mutex mu_;
  int64_t max_radius_ = -1;
  std::vector<std::vector<LatticeCount>> rows_;
  std::vector<std::vector<uint64_t>> exact_;
};

LatticeTable& GlobalLatticeTable() {
  static LatticeTable* table = new LatticeTable();
  return *table;
}

absl::Status ValidateBiasInputs(const BiasBoundInputs& inputs) {
  if (!(inputs.min_true_count >= 0.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "r_m must be non-negative, got ", inputs.min_true_count));
  }
  if (!(inputs.c_prime >= 0.0) || !std::isfinite(inputs.c_prime)) {
    return absl::InvalidArgumentError(
        absl::StrCat("C' must be finite and >= 0, got ", inputs.c_prime));
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<double> L1BallProbLaplace(const BallProbabilityQuery& q) {
  if (absl::Status s = ValidateQuery(q); !s.ok()) return s;
  return SplitPoisson(q.dimension, q.radius / q.scale).upper;
}

absl::StatusOr<double> L1BallTailLaplace(const BallProbabilityQuery& q) {
  if (absl::Status s = ValidateQuery(q); !s.ok()) return s;
  return SplitPoisson(q.dimension, q.radius / q.scale).lower;
}

LatticeCount LatticeBallCount(int i, int64_t radius) {
  return GlobalLatticeTable().Get(i, radius);
}

absl::StatusOr<double> L1BallTailGeometric(int64_t radius, double a,
                                           int dimension) {
  if (absl::Status s = ValidateGeometric(radius, a, dimension); !s.ok()) {
    return s;
  }
  const double ratio = (1.0 - a) / (1.0 + a);
  const double log_prefactor = std::log(2.0) +
                               static_cast<double>(radius + 1) * std::log(a) -
                               std::log1p(a);
  double sum = 0.0;
  for (int i = 0; i < dimension; ++i) {
    const LatticeCount h = LatticeBallCount(i, radius);
    sum += std::exp(std::log(h.value) + i * std::log(ratio) + log_prefactor);
  }
  return std::clamp(sum, 0.0, 1.0);
}

absl::StatusOr<double> L1BallProbGeometric(int64_t radius, double a,
                                           int dimension) {
  absl::StatusOr<double> tail = L1BallTailGeometric(radius, a, dimension);
  if (!tail.ok()) return tail.status();
  return 1.0 - *tail;
}

absl::StatusOr<double> BiasBound(const BiasBoundInputs& inputs) {
  if (absl::Status s = ValidateBiasInputs(inputs); !s.ok()) return s;
  absl::StatusOr<double> tail = L1BallTailLaplace(
      {inputs.min_true_count, inputs.dimension, inputs.scale});
  if (!tail.ok()) return tail.status();
  return inputs.c_prime * *tail;
}

absl::StatusOr<double> BiasBoundGeometric(const BiasBoundInputs& inputs) {
  if (absl::Status s = ValidateBiasInputs(inputs); !s.ok()) return s;
  absl::StatusOr<double> tail = L1BallTailGeometric(
      static_cast<int64_t>(std::floor(inputs.min_true_count)), inputs.scale,
      inputs.dimension);
  if (!tail.ok()) return tail.status();
  return inputs.c_prime * *tail;
}

absl::StatusOr<double> SupDistanceCprime(const LinearSystem& sys,
                                         const Eigen::VectorXd& x) {
  if (x.size() != sys.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat("true data has ", x.size(), " entries, system has ",
                     sys.cols(), " variables"));
  }
  if (!sys.nonneg) {
    return absl::UnimplementedError(
        "C' is unbounded without non-negativity; supply it manually");
  }
  const Eigen::Index n = sys.cols();

  if (sys.rows() == 1) {
    const double w = sys.a(0, 0);
    if (w > 0.0 && (sys.a.array() == w).all()) {
      const double total = sys.b[0] / w;
      return (x.array().max(total - x.array())).maxCoeff();
    }
  }

  // Hierarchy shape: one pin row, the rest "children - parent = 0".
  int pinned = -1;
  double pinned_total = 0.0;
  std::vector<int> parent(n, -1);
  std::vector<std::vector<int>> children(n);
  for (Eigen::Index row = 0; row < sys.rows(); ++row) {
    std::vector<int> plus;
    std::vector<int> minus;
    int other = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double c = sys.a(row, j);
      if (c == 0.0) continue;
      if (c == 1.0) {
        plus.push_back(static_cast<int>(j));
      } else if (c == -1.0) {
        minus.push_back(static_cast<int>(j));
      } else {
        ++other;
      }
    }
    if (other == 0 && minus.empty() && plus.size() == 1) {
      if (pinned >= 0) {
        return absl::UnimplementedError("more than one pinned variable");
      }
      pinned = plus[0];
      pinned_total = sys.b[row];
      continue;
    }
    if (other != 0 || minus.size() != 1 || plus.empty() || sys.b[row] != 0.0) {
      return absl::UnimplementedError(
          "C' is only available for simplex or hierarchy systems");
    }
    const int p = minus[0];
    if (!children[p].empty()) {
      return absl::UnimplementedError("node appears as parent twice");
    }
    for (int c : plus) {
      if (parent[c] >= 0 || c == p) {
        return absl::UnimplementedError("node has more than one parent");
      }
      parent[c] = p;
      children[p].push_back(c);
    }
  }
  if (pinned < 0 || parent[pinned] >= 0 || pinned_total < 0.0) {
    return absl::UnimplementedError("hierarchy system needs a pinned root");
  }
  // Every variable must hang below the pinned root.
  std::vector<int> stack = {pinned};
  std::vector<bool> seen(n, false);
  seen[pinned] = true;
  int reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int c : children[v]) {
      if (seen[c]) return absl::UnimplementedError("cycle in hierarchy");
      seen[c] = true;
      ++reached;
      stack.push_back(c);
    }
  }
  if (reached != n) {
    return absl::UnimplementedError("variables outside the pinned tree");
  }
  double c_prime = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == pinned) continue;
    c_prime = std::max({c_prime, x[i], pinned_total - x[i]});
  }
  return c_prime;
}

absl::StatusOr<double> MarginalErrorVariance(double lambda, int n) {
  if (!(lambda > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("lambda must be positive, got ", lambda));
  }
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("dimension must be >= 1, got ", n));
  }
  return 2.0 * lambda * lambda * (1.0 - 1.0 / static_cast<double>(n));
}

double SampleMarginalError(double lambda, int n, RngStream& rng) {
  if (n <= 1) return 0.0;
  const double first = SampleLaplace(lambda, rng);
  double others = 0.0;
  for (int j = 1; j < n; ++j) others += SampleLaplace(lambda, rng);
  return (static_cast<double>(n - 1) * first - others) / n;
}

double SampleMarginalError(const NoiseSpec& spec, int n, RngStream& rng) {
  if (n <= 1) return 0.0;
  const double first = spec.Sample(rng);
  double others = 0.0;
  for (int j = 1; j < n; ++j) others += spec.Sample(rng);
  return (static_cast<double>(n - 1) * first - others) / n;
}

}  // namespace dppost
