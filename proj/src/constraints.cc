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

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace dppost {

namespace {

// Orders records breadth-first from the root. Children keep input order.
absl::StatusOr<std::vector<HierarchyNode>> BuildTree(
    const std::vector<HierarchyRecord>& records) {
  if (records.empty()) {
    return absl::InvalidArgumentError("hierarchy has no nodes");
  }
  std::unordered_map<std::string, int> by_id;
  int root = -1;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const HierarchyRecord& r = records[i];
    if (r.id.empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("record ", i, " has an empty id"));
    }
    if (!by_id.emplace(r.id, i).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("duplicate node id '", r.id, "'"));
    }
    if (r.parent_id.empty()) {
      if (root >= 0) {
        return absl::InvalidArgumentError(absl::StrCat(
            "multiple roots: '", records[root].id, "' and '", r.id, "'"));
      }
      root = i;
    }
  }
  if (root < 0) return absl::InvalidArgumentError("hierarchy has no root");

  std::vector<std::vector<int>> children(records.size());
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const HierarchyRecord& r = records[i];
    if (r.parent_id.empty()) continue;
    auto it = by_id.find(r.parent_id);
    if (it == by_id.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "node '", r.id, "' has unknown parent '", r.parent_id, "'"));
    }
    children[it->second].push_back(i);
  }

  std::vector<HierarchyNode> nodes;
  nodes.reserve(records.size());
  std::vector<int> position(records.size(), -1);
  std::deque<int> queue = {root};
  position[root] = 0;
  nodes.push_back({records[root].id, 0, records[root].count, std::nullopt, {}});
  while (!queue.empty()) {
    const int rec = queue.front();
    queue.pop_front();
    const int node = position[rec];
    for (int child : children[rec]) {
      const int index = static_cast<int>(nodes.size());
      position[child] = index;
      nodes.push_back({records[child].id, nodes[node].level + 1,
                       records[child].count, node, {}});
      nodes[node].children.push_back(index);
      queue.push_back(child);
    }
  }
  if (nodes.size() != records.size()) {
    // Records unreachable from the root sit on a parent cycle.
    return absl::InvalidArgumentError(
        absl::StrCat(records.size() - nodes.size(),
                     " node(s) are not connected to the root (cycle)"));
  }
  return nodes;
}

void FillInternalSums(std::vector<HierarchyNode>& nodes) {
  for (int i = static_cast<int>(nodes.size()) - 1; i >= 0; --i) {
    if (nodes[i].children.empty()) continue;
    double sum = 0.0;
    for (int c : nodes[i].children) sum += nodes[c].count;
    nodes[i].count = sum;
  }
}

absl::Status ValidateCounts(const std::vector<HierarchyNode>& nodes) {
  for (const HierarchyNode& n : nodes) {
    if (!(n.count >= 0.0) || !std::isfinite(n.count)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "node '", n.id, "' has invalid count ", n.count, " (must be >= 0)"));
    }
  }
  const double tol = 1e-9 * (nodes.front().count + 1.0);
  for (const HierarchyNode& n : nodes) {
    if (n.children.empty()) continue;
    double sum = 0.0;
    for (int c : n.children) sum += nodes[c].count;
    if (std::abs(sum - n.count) > tol) {
      return absl::InvalidArgumentError(
          absl::StrCat("node '", n.id, "' has count ", n.count,
                       " but its children sum to ", sum));
    }
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<LinearSystem> LinearSystem::Create(Eigen::MatrixXd a,
                                                  Eigen::VectorXd b,
                                                  bool nonneg) {
  if (a.rows() < 1 || a.cols() < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("constraint matrix must be at least 1x1, got ", a.rows(),
                     "x", a.cols()));
  }
  if (b.size() != a.rows()) {
    return absl::InvalidArgumentError(
        absl::StrCat("right-hand side has ", b.size(), " entries for ",
                     a.rows(), " rows"));
  }
  if (!a.allFinite() || !b.allFinite()) {
    return absl::InvalidArgumentError("constraint data must be finite");
  }
  return LinearSystem{std::move(a), std::move(b), nonneg};
}

absl::StatusOr<Hierarchy> Hierarchy::Create(
    const std::vector<HierarchyRecord>& records) {
  absl::StatusOr<std::vector<HierarchyNode>> nodes = BuildTree(records);
  if (!nodes.ok()) return nodes.status();
  if (absl::Status s = ValidateCounts(*nodes); !s.ok()) return s;
  return Hierarchy(*std::move(nodes));
}

absl::StatusOr<Hierarchy> Hierarchy::FromLeafCounts(
    const std::vector<HierarchyRecord>& records) {
  absl::StatusOr<std::vector<HierarchyNode>> nodes = BuildTree(records);
  if (!nodes.ok()) return nodes.status();
  FillInternalSums(*nodes);
  if (absl::Status s = ValidateCounts(*nodes); !s.ok()) return s;
  return Hierarchy(*std::move(nodes));
}

Eigen::VectorXd Hierarchy::Counts() const {
  Eigen::VectorXd counts(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) counts[i] = nodes_[i].count;
  return counts;
}

std::vector<int> Hierarchy::LeafIndices() const {
  std::vector<int> leaves;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].children.empty()) leaves.push_back(i);
  }
  return leaves;
}

std::vector<HierarchyRecord> Hierarchy::Records() const {
  std::vector<HierarchyRecord> records;
  records.reserve(nodes_.size());
  for (const HierarchyNode& n : nodes_) {
    records.push_back(
        {n.id, n.parent ? nodes_[*n.parent].id : std::string(), n.count});
  }
  return records;
}

double Hierarchy::ConsistencyTolerance() const {
  return 1e-9 * (root().count + 1.0);
}

absl::StatusOr<Hierarchy> Hierarchy::ShiftLeaves(double shift) const {
  std::vector<HierarchyNode> nodes = nodes_;
  for (HierarchyNode& n : nodes) {
    if (n.children.empty()) n.count += shift;
  }
  FillInternalSums(nodes);
  if (absl::Status s = ValidateCounts(nodes); !s.ok()) return s;
  return Hierarchy(std::move(nodes));
}

absl::StatusOr<HierarchySystem> HierarchyToSystem(const Hierarchy& h,
                                                  bool leaves_only) {
  if (h.size() == 0) return absl::InvalidArgumentError("empty hierarchy");
  const std::vector<HierarchyNode>& nodes = h.nodes();
  HierarchySystem out;

  if (leaves_only) {
    out.variable_nodes = h.LeafIndices();
    const auto n = static_cast<Eigen::Index>(out.variable_nodes.size());
    out.system.a = Eigen::MatrixXd::Ones(1, n);
    out.system.b = Eigen::VectorXd::Constant(1, h.root().count);
    out.system.nonneg = true;
    return out;
  }

  const auto n = static_cast<Eigen::Index>(nodes.size());
  int internal = 0;
  for (const HierarchyNode& node : nodes) {
    if (!node.children.empty()) ++internal;
  }
  out.variable_nodes.resize(nodes.size());
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    out.variable_nodes[i] = i;
  }
  out.system.a = Eigen::MatrixXd::Zero(1 + internal, n);
  out.system.b = Eigen::VectorXd::Zero(1 + internal);
  out.system.a(0, 0) = 1.0;
  out.system.b[0] = h.root().count;
  int row = 1;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (nodes[i].children.empty()) continue;
    out.system.a(row, i) = -1.0;
    for (int c : nodes[i].children) out.system.a(row, c) = 1.0;
    ++row;
  }
  out.system.nonneg = true;
  return out;
}

absl::StatusOr<std::vector<Violation>> CheckFeasible(const Eigen::VectorXd& v,
                                                     const LinearSystem& sys,
                                                     double tol) {
  if (v.size() != sys.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat("vector has ", v.size(), " entries, system has ",
                     sys.cols(), " variables"));
  }
  if (!(tol > 0.0)) {
    return absl::InvalidArgumentError("tolerance must be positive");
  }
  std::vector<Violation> violations;
  const Eigen::VectorXd residual = sys.a * v - sys.b;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    if (!(std::abs(residual[i]) <= tol)) {
      violations.push_back({static_cast<int>(i), std::abs(residual[i])});
    }
  }
  if (sys.nonneg) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!(v[i] >= -tol)) {
        violations.push_back(
            {static_cast<int>(sys.rows() + i), std::abs(v[i])});
      }
    }
  }
  return violations;
}

absl::StatusOr<Eigen::VectorXd> Reflect(const Eigen::VectorXd& center,
                                        const Eigen::VectorXd& u) {
  if (center.size() != u.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "reflection dimension mismatch: ", center.size(), " vs ", u.size()));
  }
  return (2.0 * center - u).eval();
}

}  // namespace dppost
