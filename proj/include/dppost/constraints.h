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

#ifndef DPPOST_CONSTRAINTS_H_
#define DPPOST_CONSTRAINTS_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "Eigen/Core"
#include "absl/status/statusor.h"

namespace dppost {

// The feasible region K = {v : A v = b}, optionally intersected with v >= 0.
// Rows of A may be linearly dependent; consistency is checked by the solvers.
struct LinearSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  bool nonneg = false;

  static absl::StatusOr<LinearSystem> Create(Eigen::MatrixXd a,
                                             Eigen::VectorXd b, bool nonneg);

  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index cols() const { return a.cols(); }
};

// One node of a region hierarchy. Nodes are stored breadth-first, children
// in file order, so `parent` always precedes its children.
struct HierarchyNode {
  std::string id;
  int level = 0;
  double count = 0.0;
  std::optional<int> parent;
  std::vector<int> children;
};

// Input record for building a hierarchy; an empty parent_id marks the root.
struct HierarchyRecord {
  std::string id;
  std::string parent_id;
  double count = 0.0;
};

// Rooted tree of regions with non-negative counts in which every internal
// count equals the sum of its children's counts.
class Hierarchy {
 public:
  // Validates the tree shape (one root, known parents, unique ids, no
  // cycles), non-negativity, and the parent-sum invariant.
  static absl::StatusOr<Hierarchy> Create(
      const std::vector<HierarchyRecord>& records);

  // Builds a tree from leaf counts alone: internal counts are filled in as
  // children sums. Internal records' counts are ignored.
  static absl::StatusOr<Hierarchy> FromLeafCounts(
      const std::vector<HierarchyRecord>& records);

  const std::vector<HierarchyNode>& nodes() const { return nodes_; }
  size_t size() const { return nodes_.size(); }
  const HierarchyNode& root() const { return nodes_.front(); }

  // Node counts in breadth-first order.
  Eigen::VectorXd Counts() const;
  std::vector<int> LeafIndices() const;
  std::vector<HierarchyRecord> Records() const;

  // Tolerance used for the parent-sum invariant: 1e-9 * (root count + 1).
  double ConsistencyTolerance() const;

  // A copy with every leaf count increased by `shift` and internal counts
  // recomputed.
  absl::StatusOr<Hierarchy> ShiftLeaves(double shift) const;

 private:
  explicit Hierarchy(std::vector<HierarchyNode> nodes)
      : nodes_(std::move(nodes)) {}

  std::vector<HierarchyNode> nodes_;
};

// A linear system generated from a hierarchy together with the map from
// variable index to node index.
struct HierarchySystem {
  LinearSystem system;
  std::vector<int> variable_nodes;
};

// Builds the census constraint system. With leaves_only = false, variables
// are all node counts in breadth-first order; row 0 pins the root to its
// count and each internal node contributes "children sum minus parent = 0".
// With leaves_only = true, variables are the leaves and a single row pins
// their sum to the root count.
absl::StatusOr<HierarchySystem> HierarchyToSystem(const Hierarchy& h,
                                                  bool leaves_only);

// A violated constraint. Equality rows use their row index; a negative
// coordinate i of a non-negative system is reported as index rows() + i.
struct Violation {
  int constraint_index = 0;
  double residual = 0.0;

  friend bool operator==(const Violation&, const Violation&) = default;
};

absl::StatusOr<std::vector<Violation>> CheckFeasible(const Eigen::VectorXd& v,
                                                     const LinearSystem& sys,
                                                     double tol);

// Point reflection of u through center: 2 center - u.
absl::StatusOr<Eigen::VectorXd> Reflect(const Eigen::VectorXd& center,
                                        const Eigen::VectorXd& u);

}  // namespace dppost

#endif  // DPPOST_CONSTRAINTS_H_
