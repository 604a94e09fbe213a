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

#ifndef DPPOST_HARNESS_H_
#define DPPOST_HARNESS_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dppost/constraints.h"
#include "dppost/metrics.h"
#include "dppost/noise.h"
#include "dppost/projection.h"

namespace dppost {

enum class ExperimentKind {
  kBiasP,
  kBiasPplusShift,
  kConvergencePS,
  kVariancePS,
  kBoundCheck,
};

absl::string_view ExperimentKindName(ExperimentKind kind);
absl::StatusOr<ExperimentKind> ParseExperimentKind(absl::string_view name);

// Random census-style tree: branching[k] children per node at level k, leaf
// counts drawn uniformly from [leaf_min, leaf_max] (integers unless
// integer_counts is false), internal counts are children sums.
struct SyntheticHierarchySpec {
  std::vector<int> branching = {2, 3};
  double leaf_min = 0.0;
  double leaf_max = 100.0;
  bool integer_counts = true;
  uint64_t seed = 0;
  uint64_t stream = 0;
};

absl::StatusOr<Hierarchy> GenerateSyntheticHierarchy(
    const SyntheticHierarchySpec& spec);

// Experiment configuration. The text form is one `key = value` per line with
// `#` comments; keys are the snake_case field names below (noise is given as
// noise_family plus either noise_scale or sensitivity/epsilon, the synthetic
// tree as branching/leaf_min/leaf_max).
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kBiasP;
  // Hierarchy file (CSV or JSON); unset means a synthetic tree.
  std::optional<std::string> data_path;
  SyntheticHierarchySpec synthetic;
  NoiseSpec noise = NoiseSpec::Laplace(1.0).value();
  int64_t trials = 10000;
  uint64_t master_seed = 0;
  std::vector<double> shift_factors;
  std::vector<int> dimensions;
  std::string output_dir = ".";
  std::optional<double> c_prime;
  int bootstrap = 100;
  bool write_residuals = true;
  int max_iterations = 100000;
};

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text);
absl::StatusOr<ExperimentConfig> ReadExperimentConfig(const std::string& path);
// Canonical key = value form; parses back to an equal config.
std::string FormatExperimentConfig(const ExperimentConfig& config);

// Checks the invariants the runners rely on (trial minimum, sweep lists).
absl::Status ValidateExperimentConfig(const ExperimentConfig& config);

// Resolves the configured data source.
absl::StatusOr<Hierarchy> LoadInstance(const ExperimentConfig& config);

struct Gate {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SolverSummary {
  int64_t projections = 0;
  int64_t total_iterations = 0;
  int max_iterations = 0;
  double max_residual_inf = 0.0;
  int64_t clamped_coordinates = 0;
  int64_t infeasible_outputs = 0;
};

// One point of a sweep (a shift factor or a dimension); experiments without
// a sweep have a single point.
struct SweepPoint {
  double parameter = 0.0;
  int dimension = 0;
  double min_true_count = 0.0;
  std::optional<BiasEstimate> bias;
  std::optional<BiasEstimate> control;
  std::optional<VarianceEstimate> variance;
  std::optional<double> analytic_variance;
  std::optional<double> wasserstein;
  std::optional<double> wasserstein_se;
  std::optional<double> c_prime;
  std::optional<double> bias_bound;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<SweepPoint> points;
  std::vector<Gate> gates;
  SolverSummary solver;
  // Kept out of report.json so reports are byte-identical across runs.
  double wall_seconds = 0.0;

  bool AllGatesPass() const;
};

struct RunOptions {
  int workers = 1;
  // Receives residuals.csv rows in trial order when set.
  std::ostream* residuals = nullptr;
};

absl::StatusOr<ExperimentReport> RunExperiment(const ExperimentConfig& config,
                                               const RunOptions& options = {});

// Kind-specific entry points. The Hierarchy overloads skip LoadInstance.
absl::StatusOr<ExperimentReport> RunBiasExperiment(
    const ExperimentConfig& config, const RunOptions& options = {});
absl::StatusOr<ExperimentReport> RunBiasExperiment(
    const ExperimentConfig& config, const Hierarchy& instance,
    const RunOptions& options = {});
absl::StatusOr<ExperimentReport> RunConvergenceExperiment(
    const ExperimentConfig& config, const RunOptions& options = {});
absl::StatusOr<ExperimentReport> RunVarianceExperiment(
    const ExperimentConfig& config, const RunOptions& options = {});
absl::StatusOr<ExperimentReport> RunBoundCheck(const ExperimentConfig& config,
                                               const RunOptions& options = {});
absl::StatusOr<ExperimentReport> RunBoundCheck(const ExperimentConfig& config,
                                               const Hierarchy& instance,
                                               const RunOptions& options = {});

// Monte Carlo bias of (P) or (P+) on an arbitrary system: trial t perturbs
// `truth` with noise from stream (seed, stream_offset + t), projects, and
// records the residual. The raw noise is recorded as the control.
struct BiasRun {
  BiasEstimate bias;
  BiasEstimate control;
  SolverSummary solver;
};
absl::StatusOr<BiasRun> MeasureProjectionBias(
    const LinearSystem& system, const Eigen::VectorXd& truth,
    const NoiseSpec& noise, int64_t trials, uint64_t seed, bool nonneg,
    const RunOptions& options = {}, uint64_t stream_offset = 0,
    int sweep_index = -1, const SolverOptions& solver = {});

// report.json (full report without wall time), summary.csv (long format
// quantity,index,value), timing.json.
std::string ReportToJson(const ExperimentReport& report);
std::string ReportToSummaryCsv(const ExperimentReport& report);
absl::Status WriteReportFiles(const ExperimentReport& report,
                              const std::string& directory);

}  // namespace dppost

#endif  // DPPOST_HARNESS_H_
