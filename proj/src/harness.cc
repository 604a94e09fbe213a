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

#include "dppost/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "dppost/analysis.h"
#include "dppost/hierarchy_io.h"
#include "json.hpp"

namespace dppost {

namespace {

using ::nlohmann::ordered_json;

constexpr int64_t kMinStatisticalTrials = 100;
constexpr int64_t kBlockTrials = 4096;
constexpr double kZeroBiasGate = 4.0;
constexpr double kVarianceGate = 3.0;
constexpr double kMonotoneGate = 2.0;
constexpr double kBoundGate = 3.0;

// Calls fn(i) for i in [0, count) on up to `workers` threads.
void ParallelFor(int64_t count, int workers,
                 const std::function<void(int64_t)>& fn) {
  const int threads =
      static_cast<int>(std::min<int64_t>(std::max(workers, 1), count));
  if (threads <= 1) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
}

using TrialFn =
    std::function<absl::Status(int64_t, Eigen::Ref<Eigen::VectorXd>)>;
using ConsumeFn =
    std::function<void(int64_t, const Eigen::Ref<const Eigen::VectorXd>&)>;

// Computes trial rows in parallel blocks and consumes them in trial order,
// so reductions and residual output do not depend on the worker count. On
// failure the error of the lowest failing trial is returned.
absl::Status RunOrdered(int64_t trials, Eigen::Index width, int workers,
                        const TrialFn& compute, const ConsumeFn& consume) {
  Eigen::MatrixXd block(width, std::min(kBlockTrials, trials));
  std::vector<absl::Status> errors;
  for (int64_t start = 0; start < trials; start += kBlockTrials) {
    const int64_t count = std::min(kBlockTrials, trials - start);
    errors.assign(count, absl::OkStatus());
    ParallelFor(count, workers, [&](int64_t i) {
      errors[i] = compute(start + i, block.col(i));
    });
    for (const absl::Status& s : errors) {
      if (!s.ok()) return s;
    }
    for (int64_t i = 0; i < count; ++i) consume(start + i, block.col(i));
  }
  return absl::OkStatus();
}

void AppendResidualRow(std::string& out, int sweep, int64_t trial,
                       const Eigen::Ref<const Eigen::VectorXd>& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (sweep >= 0) absl::StrAppend(&out, sweep, ",");
    absl::StrAppend(&out, trial, ",", i, ",", FormatDouble(values[i]), "\n");
  }
}

std::string Fmt(double v) { return absl::StrFormat("%.6g", v); }

void MergeSolver(SolverSummary& into, const SolverSummary& from) {
  into.projections += from.projections;
  into.total_iterations += from.total_iterations;
  into.max_iterations = std::max(into.max_iterations, from.max_iterations);
  into.max_residual_inf = std::max(into.max_residual_inf, from.max_residual_inf);
  into.clamped_coordinates += from.clamped_coordinates;
  into.infeasible_outputs += from.infeasible_outputs;
}

Gate FeasibilityGate(const SolverSummary& s) {
  return {"feasibility", s.infeasible_outputs == 0,
          absl::StrCat(s.infeasible_outputs, " of ", s.projections,
                       " projected outputs violate the constraints")};
}

// Rounding allowance for coordinates that carry no noise, such as a pinned
// root count.
double RoundingFloor(const Eigen::VectorXd& truth) {
  return 1e-8 * (1.0 + (truth.size() ? truth.lpNorm<Eigen::Infinity>() : 0.0));
}

Gate ZeroBiasGate(const std::string& name, const BiasEstimate& b,
                  double floor) {
  const Eigen::Index worst = b.ArgMaxAbsMean();
  const double se = b.standard_error.size() ? b.standard_error[worst] : 0.0;
  return {name, b.WithinStandardErrors(kZeroBiasGate, floor),
          absl::StrCat("max |mean| ", Fmt(b.MaxAbsMean()), " at coordinate ",
                       worst, " (SE ", Fmt(se), "); gate ", Fmt(kZeroBiasGate),
                       " SE per coordinate over ", b.mean.size(),
                       " coordinates (Bonferroni-style margin)")};
}

double MaxAbsSe(const BiasEstimate& b) {
  return b.standard_error.size() ? b.standard_error[b.ArgMaxAbsMean()] : 0.0;
}

absl::StatusOr<std::vector<double>> ParseDoubleList(absl::string_view text) {
  std::vector<double> out;
  for (absl::string_view part : absl::StrSplit(text, ',', absl::SkipWhitespace())) {
    absl::StatusOr<double> v = ParseDouble(part);
    if (!v.ok()) return v.status();
    out.push_back(*v);
  }
  return out;
}

absl::StatusOr<std::vector<int>> ParseIntList(absl::string_view text) {
  std::vector<int> out;
  for (absl::string_view part : absl::StrSplit(text, ',', absl::SkipWhitespace())) {
    int v = 0;
    if (!absl::SimpleAtoi(absl::StripAsciiWhitespace(part), &v)) {
      return absl::InvalidArgumentError(
          absl::StrCat("not an integer: '", part, "'"));
    }
    out.push_back(v);
  }
  return out;
}

absl::StatusOr<bool> ParseBool(absl::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  return absl::InvalidArgumentError(absl::StrCat("not a boolean: '", text, "'"));
}

std::string JoinDoubles(const std::vector<double>& v) {
  std::vector<std::string> parts;
  for (double d : v) parts.push_back(FormatDouble(d));
  return absl::StrJoin(parts, ",");
}

ordered_json VectorJson(const Eigen::VectorXd& v) {
  ordered_json out = ordered_json::array();
  for (double d : v) out.push_back(d);
  return out;
}

ordered_json BiasJson(const BiasEstimate& b) {
  ordered_json out;
  out["trials"] = b.trials;
  out["max_abs_mean"] = b.MaxAbsMean();
  out["argmax_coordinate"] = b.ArgMaxAbsMean();
  out["argmax_standard_error"] = MaxAbsSe(b);
  out["mean"] = VectorJson(b.mean);
  out["standard_error"] = VectorJson(b.standard_error);
  return out;
}

double MinCoeff(const Eigen::VectorXd& v) {
  return v.size() ? v.minCoeff() : 0.0;
}

// Sample standard deviation of bootstrap replicates of the W1 distance.
double BootstrapWassersteinSe(const std::vector<double>& a,
                              const std::vector<double>& b, int replicates,
                              uint64_t seed, uint64_t stream_offset,
                              int workers) {
  if (replicates < 2) return 0.0;
  std::vector<double> values(replicates);
  ParallelFor(replicates, workers, [&](int64_t r) {
    RngStream rng(seed, stream_offset + static_cast<uint64_t>(r));
    std::vector<double> ra(a.size());
    std::vector<double> rb(b.size());
    for (double& v : ra) v = a[rng.NextInt(0, a.size() - 1)];
    for (double& v : rb) v = b[rng.NextInt(0, b.size() - 1)];
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    values[r] = Wasserstein1Sorted(ra, rb).value();
  });
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / replicates;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (replicates - 1));
}

// (P_S) marginal residual of coordinate 0 for trial t, plus one fresh draw
// of the noise itself.
struct MarginalSamples {
  std::vector<double> residual;
  std::vector<double> reference;
};

absl::StatusOr<MarginalSamples> SampleMarginals(const ExperimentConfig& config,
                                                int n, int sweep,
                                                const RunOptions& options) {
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("dimension must be >= 1, got ", n));
  }
  const uint64_t trial_seed = DeriveSeed(config.master_seed, "trials");
  const uint64_t reference_seed = DeriveSeed(config.master_seed, "reference");
  MarginalSamples out;
  out.residual.resize(config.trials);
  out.reference.resize(config.trials);
  std::string buffer;
  absl::Status s = RunOrdered(
      config.trials, 2, options.workers,
      [&](int64_t t, Eigen::Ref<Eigen::VectorXd> row) -> absl::Status {
        RngStream rng(trial_seed, t);
        Eigen::VectorXd noisy(n);
        FillSamples(config.noise, rng, noisy);
        // True counts are zero: (P_S) residuals do not depend on them.
        absl::StatusOr<ProjectionResult> r = ProjectSum(noisy, 0.0);
        if (!r.ok()) return r.status();
        row[0] = r->solution[0];
        RngStream ref(reference_seed, t);
        row[1] = config.noise.Sample(ref);
        return absl::OkStatus();
      },
      [&](int64_t t, const Eigen::Ref<const Eigen::VectorXd>& row) {
        out.residual[t] = row[0];
        out.reference[t] = row[1];
        if (options.residuals != nullptr) {
          buffer.clear();
          AppendResidualRow(buffer, sweep, t, row.head(1));
          *options.residuals << buffer;
        }
      });
  if (!s.ok()) return s;
  return out;
}

}  // namespace

absl::string_view ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kBiasP:
      return "bias_P";
    case ExperimentKind::kBiasPplusShift:
      return "bias_Pplus_shift";
    case ExperimentKind::kConvergencePS:
      return "convergence_PS";
    case ExperimentKind::kVariancePS:
      return "variance_PS";
    case ExperimentKind::kBoundCheck:
      return "bound_check";
  }
  return "unknown";
}

absl::StatusOr<ExperimentKind> ParseExperimentKind(absl::string_view name) {
  for (ExperimentKind k :
       {ExperimentKind::kBiasP, ExperimentKind::kBiasPplusShift,
        ExperimentKind::kConvergencePS, ExperimentKind::kVariancePS,
        ExperimentKind::kBoundCheck}) {
    if (name == ExperimentKindName(k)) return k;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown experiment kind '", name, "'"));
}

absl::StatusOr<Hierarchy> GenerateSyntheticHierarchy(
    const SyntheticHierarchySpec& spec) {
  if (spec.branching.empty()) {
    return absl::InvalidArgumentError("branching list is empty");
  }
  for (int b : spec.branching) {
    if (b < 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("branching factors must be >= 1, got ", b));
    }
  }
  if (!(spec.leaf_min >= 0.0) || !(spec.leaf_max >= spec.leaf_min)) {
    return absl::InvalidArgumentError(
        absl::StrCat("leaf range [", spec.leaf_min, ", ", spec.leaf_max,
                     "] must satisfy 0 <= min <= max"));
  }
  int64_t total = 1;
  int64_t width = 1;
  for (int b : spec.branching) {
    width *= b;
    total += width;
    if (total > 10'000'000) {
      return absl::InvalidArgumentError("synthetic hierarchy is too large");
    }
  }
  RngStream rng(spec.seed, spec.stream);
  std::vector<HierarchyRecord> records;
  records.push_back({"r", "", 0.0});
  std::vector<std::string> frontier = {"r"};
  for (size_t level = 0; level < spec.branching.size(); ++level) {
    const bool leaves = level + 1 == spec.branching.size();
    std::vector<std::string> next;
    for (const std::string& parent : frontier) {
      for (int c = 0; c < spec.branching[level]; ++c) {
        std::string id = absl::StrCat(parent, ".", c);
        double count = 0.0;
        if (leaves) {
          if (spec.integer_counts) {
            count = static_cast<double>(
                rng.NextInt(static_cast<int64_t>(std::ceil(spec.leaf_min)),
                            static_cast<int64_t>(std::floor(spec.leaf_max))));
          } else {
            count = spec.leaf_min +
                    (spec.leaf_max - spec.leaf_min) * rng.NextOpenUniform();
          }
        }
        records.push_back({id, parent, count});
        next.push_back(std::move(id));
      }
    }
    frontier = std::move(next);
  }
  return Hierarchy::FromLeafCounts(records);
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text) {
  ExperimentConfig config;
  std::optional<std::string> family_name;
  std::optional<double> scale;
  std::optional<double> sensitivity;
  std::optional<double> epsilon;
  bool trials_set = false;
  int line_number = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n')) {
    ++line_number;
    absl::string_view line = raw.substr(0, raw.find('#'));
    line = absl::StripAsciiWhitespace(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == absl::string_view::npos) {
      return absl::InvalidArgumentError(
          absl::StrCat("config line ", line_number, ": expected key = value"));
    }
    const std::string key(absl::StripAsciiWhitespace(line.substr(0, eq)));
    const std::string value(absl::StripAsciiWhitespace(line.substr(eq + 1)));
    auto fail = [&](const absl::Status& s) {
      return absl::InvalidArgumentError(absl::StrCat(
          "config line ", line_number, " (", key, "): ", s.message()));
    };
    auto number = [&]() -> absl::StatusOr<double> {
      absl::StatusOr<double> v = ParseDouble(value);
      if (!v.ok()) return fail(v.status());
      return v;
    };

    if (key == "kind") {
      absl::StatusOr<ExperimentKind> k = ParseExperimentKind(value);
      if (!k.ok()) return fail(k.status());
      config.kind = *k;
    } else if (key == "data") {
      if (value == "synthetic") {
        config.data_path.reset();
      } else {
        config.data_path = value;
      }
    } else if (key == "branching") {
      absl::StatusOr<std::vector<int>> v = ParseIntList(value);
      if (!v.ok()) return fail(v.status());
      config.synthetic.branching = *v;
    } else if (key == "leaf_min" || key == "leaf_max") {
      absl::StatusOr<double> v = number();
      if (!v.ok()) return v.status();
      (key == "leaf_min" ? config.synthetic.leaf_min
                         : config.synthetic.leaf_max) = *v;
    } else if (key == "integer_counts" || key == "write_residuals") {
      absl::StatusOr<bool> v = ParseBool(value);
      if (!v.ok()) return fail(v.status());
      (key == "integer_counts" ? config.synthetic.integer_counts
                               : config.write_residuals) = *v;
    } else if (key == "noise_family") {
      family_name = value;
    } else if (key == "noise_scale") {
      absl::StatusOr<double> v = number();
      if (!v.ok()) return v.status();
      scale = *v;
    } else if (key == "sensitivity") {
      absl::StatusOr<double> v = number();
      if (!v.ok()) return v.status();
      sensitivity = *v;
    } else if (key == "epsilon") {
      absl::StatusOr<double> v = number();
      if (!v.ok()) return v.status();
      epsilon = *v;
    } else if (key == "trials" || key == "bootstrap" ||
               key == "max_iterations") {
      int64_t v = 0;
      if (!absl::SimpleAtoi(value, &v)) {
        return fail(absl::InvalidArgumentError("expected an integer"));
      }
      if (key == "trials") {
        config.trials = v;
        trials_set = true;
      } else if (key == "bootstrap") {
        config.bootstrap = static_cast<int>(v);
      } else {
        config.max_iterations = static_cast<int>(v);
      }
    } else if (key == "master_seed") {
      if (!absl::SimpleAtoi(value, &config.master_seed)) {
        return fail(absl::InvalidArgumentError("expected a 64-bit integer"));
      }
    } else if (key == "shift_factors") {
      absl::StatusOr<std::vector<double>> v = ParseDoubleList(value);
      if (!v.ok()) return fail(v.status());
      config.shift_factors = *v;
    } else if (key == "dimensions") {
      absl::StatusOr<std::vector<int>> v = ParseIntList(value);
      if (!v.ok()) return fail(v.status());
      config.dimensions = *v;
    } else if (key == "output_dir") {
      config.output_dir = value;
    } else if (key == "c_prime") {
      absl::StatusOr<double> v = number();
      if (!v.ok()) return v.status();
      config.c_prime = *v;
    } else {
      return absl::InvalidArgumentError(
          absl::StrCat("config line ", line_number, ": unknown key '", key,
                       "'"));
    }
  }

  NoiseFamily family = NoiseFamily::kLaplace;
  if (family_name) {
    absl::StatusOr<NoiseFamily> f = ParseNoiseFamily(*family_name);
    if (!f.ok()) return f.status();
    family = *f;
  }
  if (epsilon) {
    if (scale) {
      return absl::InvalidArgumentError(
          "give either noise_scale or sensitivity/epsilon, not both");
    }
    const double sens = sensitivity.value_or(1.0);
    absl::StatusOr<NoiseSpec> spec =
        family == NoiseFamily::kLaplace
            ? NoiseSpec::LaplaceMechanism(sens, *epsilon)
            : NoiseSpec::GeometricMechanism(sens, *epsilon);
    if (!spec.ok()) return spec.status();
    config.noise = *spec;
  } else {
    if (sensitivity) {
      return absl::InvalidArgumentError("sensitivity given without epsilon");
    }
    if (!scale) {
      return absl::InvalidArgumentError(
          "noise needs noise_scale or sensitivity/epsilon");
    }
    absl::StatusOr<NoiseSpec> spec =
        family == NoiseFamily::kLaplace ? NoiseSpec::Laplace(*scale)
                                        : NoiseSpec::TwoSidedGeometric(*scale);
    if (!spec.ok()) return spec.status();
    config.noise = *spec;
  }
  if (!trials_set && config.kind == ExperimentKind::kVariancePS) {
    config.trials = 80000;
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  return config;
}

absl::StatusOr<ExperimentConfig> ReadExperimentConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseExperimentConfig(buffer.str());
}

std::string FormatExperimentConfig(const ExperimentConfig& config) {
  std::string out;
  absl::StrAppend(&out, "kind = ", ExperimentKindName(config.kind), "\n");
  absl::StrAppend(&out, "data = ", config.data_path.value_or("synthetic"),
                  "\n");
  absl::StrAppend(&out, "branching = ",
                  absl::StrJoin(config.synthetic.branching, ","), "\n");
  absl::StrAppend(&out, "leaf_min = ", FormatDouble(config.synthetic.leaf_min),
                  "\n");
  absl::StrAppend(&out, "leaf_max = ", FormatDouble(config.synthetic.leaf_max),
                  "\n");
  absl::StrAppend(&out, "integer_counts = ",
                  config.synthetic.integer_counts ? "true" : "false", "\n");
  absl::StrAppend(&out, "noise_family = ",
                  NoiseFamilyName(config.noise.family()), "\n");
  if (const auto& p = config.noise.provenance()) {
    absl::StrAppend(&out, "sensitivity = ", FormatDouble(p->sensitivity), "\n");
    absl::StrAppend(&out, "epsilon = ", FormatDouble(p->epsilon), "\n");
  } else {
    absl::StrAppend(&out, "noise_scale = ", FormatDouble(config.noise.scale()),
                    "\n");
  }
  absl::StrAppend(&out, "trials = ", config.trials, "\n");
  absl::StrAppend(&out, "master_seed = ", config.master_seed, "\n");
  if (!config.shift_factors.empty()) {
    absl::StrAppend(&out, "shift_factors = ", JoinDoubles(config.shift_factors),
                    "\n");
  }
  if (!config.dimensions.empty()) {
    absl::StrAppend(&out, "dimensions = ", absl::StrJoin(config.dimensions, ","),
                    "\n");
  }
  absl::StrAppend(&out, "output_dir = ", config.output_dir, "\n");
  if (config.c_prime) {
    absl::StrAppend(&out, "c_prime = ", FormatDouble(*config.c_prime), "\n");
  }
  absl::StrAppend(&out, "bootstrap = ", config.bootstrap, "\n");
  absl::StrAppend(&out, "write_residuals = ",
                  config.write_residuals ? "true" : "false", "\n");
  absl::StrAppend(&out, "max_iterations = ", config.max_iterations, "\n");
  return out;
}

absl::Status ValidateExperimentConfig(const ExperimentConfig& config) {
  if (config.trials < kMinStatisticalTrials) {
    return absl::InvalidArgumentError(
        absl::StrCat("trials must be >= ", kMinStatisticalTrials,
                     " for statistical experiments, got ", config.trials));
  }
  if (config.max_iterations < 1) {
    return absl::InvalidArgumentError("max_iterations must be positive");
  }
  if (config.bootstrap < 0) {
    return absl::InvalidArgumentError("bootstrap must be >= 0");
  }
  if (config.c_prime && !(*config.c_prime >= 0.0)) {
    return absl::InvalidArgumentError("c_prime must be non-negative");
  }
  switch (config.kind) {
    case ExperimentKind::kBiasPplusShift:
      if (config.shift_factors.empty()) {
        return absl::InvalidArgumentError(
            "bias_Pplus_shift needs a non-empty shift_factors list");
      }
      for (double s : config.shift_factors) {
        if (!(s >= 0.0)) {
          return absl::InvalidArgumentError("shift factors must be >= 0");
        }
      }
      break;
    case ExperimentKind::kConvergencePS:
      if (config.dimensions.empty()) {
        return absl::InvalidArgumentError(
            "convergence_PS needs a non-empty dimensions list");
      }
      break;
    case ExperimentKind::kVariancePS:
      if (config.dimensions.size() != 2) {
        return absl::InvalidArgumentError(
            "variance_PS needs exactly two dimensions");
      }
      break;
    default:
      break;
  }
  for (int n : config.dimensions) {
    if (n < 1) return absl::InvalidArgumentError("dimensions must be >= 1");
  }
  return absl::OkStatus();
}

absl::StatusOr<Hierarchy> LoadInstance(const ExperimentConfig& config) {
  if (config.data_path) return ReadHierarchyFile(*config.data_path);
  SyntheticHierarchySpec spec = config.synthetic;
  spec.seed = DeriveSeed(config.master_seed, "hierarchy");
  spec.stream = 0;
  return GenerateSyntheticHierarchy(spec);
}

bool ExperimentReport::AllGatesPass() const {
  return std::all_of(gates.begin(), gates.end(),
                     [](const Gate& g) { return g.pass; });
}

absl::StatusOr<BiasRun> MeasureProjectionBias(
    const LinearSystem& system, const Eigen::VectorXd& truth,
    const NoiseSpec& noise, int64_t trials, uint64_t seed, bool nonneg,
    const RunOptions& options, uint64_t stream_offset, int sweep_index,
    const SolverOptions& solver) {
  if (truth.size() != system.cols()) {
    return absl::InvalidArgumentError("true data does not match the system");
  }
  if (trials < 2) {
    return absl::InvalidArgumentError("bias needs at least 2 trials");
  }
  std::optional<AffineProjector> affine;
  std::optional<NonnegProjector> positive;
  if (nonneg) {
    absl::StatusOr<NonnegProjector> p = NonnegProjector::Create(system, solver);
    if (!p.ok()) return p.status();
    positive = *std::move(p);
  } else {
    absl::StatusOr<AffineProjector> p = AffineProjector::Create(system);
    if (!p.ok()) return p.status();
    affine = *std::move(p);
  }
  LinearSystem checked = system;
  checked.nonneg = nonneg;

  const Eigen::Index n = truth.size();
  // Row layout: residual (n) | raw noise (n) | iterations, residual_inf,
  // clamped coordinates, violation count.
  const Eigen::Index width = 2 * n + 4;
  ResidualAccumulator bias(n);
  ResidualAccumulator control(n);
  SolverSummary summary;
  std::string buffer;

  absl::Status s = RunOrdered(
      trials, width, options.workers,
      [&](int64_t t, Eigen::Ref<Eigen::VectorXd> row) -> absl::Status {
        RngStream rng(seed, stream_offset + static_cast<uint64_t>(t));
        auto noise_part = row.segment(n, n);
        FillSamples(noise, rng, noise_part);
        const Eigen::VectorXd noisy = truth + noise_part;
        absl::StatusOr<ProjectionResult> r =
            nonneg ? positive->Project(noisy) : affine->Project(noisy);
        if (!r.ok()) {
          return absl::Status(r.status().code(),
                              absl::StrCat("trial ", t, ": ",
                                           r.status().message()));
        }
        row.head(n) = r->solution - truth;
        absl::StatusOr<std::vector<Violation>> violations =
            CheckFeasible(r->solution, checked, solver.ToleranceFor(noisy));
        if (!violations.ok()) return violations.status();
        row[2 * n] = r->iterations;
        row[2 * n + 1] = r->residual_inf;
        row[2 * n + 2] = r->active_nonneg;
        row[2 * n + 3] = static_cast<double>(violations->size());
        return absl::OkStatus();
      },
      [&](int64_t t, const Eigen::Ref<const Eigen::VectorXd>& row) {
        bias.Add(row.head(n));
        control.Add(row.segment(n, n));
        ++summary.projections;
        summary.total_iterations += static_cast<int64_t>(row[2 * n]);
        summary.max_iterations =
            std::max(summary.max_iterations, static_cast<int>(row[2 * n]));
        summary.max_residual_inf =
            std::max(summary.max_residual_inf, row[2 * n + 1]);
        summary.clamped_coordinates += static_cast<int64_t>(row[2 * n + 2]);
        if (row[2 * n + 3] > 0) ++summary.infeasible_outputs;
        if (options.residuals != nullptr) {
          buffer.clear();
          AppendResidualRow(buffer, sweep_index, t, row.head(n));
          *options.residuals << buffer;
        }
      });
  if (!s.ok()) return s;

  BiasRun out;
  absl::StatusOr<BiasEstimate> b = bias.Finish();
  if (!b.ok()) return b.status();
  absl::StatusOr<BiasEstimate> c = control.Finish();
  if (!c.ok()) return c.status();
  out.bias = *std::move(b);
  out.control = *std::move(c);
  out.solver = summary;
  return out;
}

absl::StatusOr<ExperimentReport> RunBiasExperiment(
    const ExperimentConfig& config, const RunOptions& options) {
  absl::StatusOr<Hierarchy> h = LoadInstance(config);
  if (!h.ok()) return h.status();
  return RunBiasExperiment(config, *h, options);
}

absl::StatusOr<ExperimentReport> RunBiasExperiment(
    const ExperimentConfig& config, const Hierarchy& instance,
    const RunOptions& options) {
  if (config.kind != ExperimentKind::kBiasP &&
      config.kind != ExperimentKind::kBiasPplusShift) {
    return absl::InvalidArgumentError("not a bias experiment");
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config;
  const uint64_t seed = DeriveSeed(config.master_seed, "trials");
  SolverOptions solver;
  solver.max_iterations = config.max_iterations;

  const bool shift = config.kind == ExperimentKind::kBiasPplusShift;
  const std::vector<double> shifts =
      shift ? config.shift_factors : std::vector<double>{0.0};
  std::vector<double> floors;
  for (size_t k = 0; k < shifts.size(); ++k) {
    absl::StatusOr<Hierarchy> h = instance.ShiftLeaves(shifts[k]);
    if (!h.ok()) return h.status();
    absl::StatusOr<HierarchySystem> hs = HierarchyToSystem(*h, false);
    if (!hs.ok()) return hs.status();
    const Eigen::VectorXd truth = h->Counts();
    floors.push_back(RoundingFloor(truth));
    // Trial t uses stream t at every shift (common random numbers).
    absl::StatusOr<BiasRun> run = MeasureProjectionBias(
        hs->system, truth, config.noise, config.trials, seed, shift, options,
        0, shift ? static_cast<int>(k) : -1, solver);
    if (!run.ok()) return run.status();

    SweepPoint point;
    point.parameter = shifts[k];
    point.dimension = static_cast<int>(truth.size());
    point.min_true_count = MinCoeff(truth);
    point.bias = run->bias;
    point.control = run->control;
    absl::StatusOr<double> c_prime =
        config.c_prime ? absl::StatusOr<double>(*config.c_prime)
                       : SupDistanceCprime(hs->system, truth);
    if (c_prime.ok()) {
      point.c_prime = *c_prime;
      BiasBoundInputs in{point.min_true_count, config.noise.scale(),
                         point.dimension, *c_prime};
      absl::StatusOr<double> bound =
          config.noise.family() == NoiseFamily::kLaplace
              ? BiasBound(in)
              : BiasBoundGeometric(in);
      if (bound.ok()) point.bias_bound = *bound;
    }
    MergeSolver(report.solver, run->solver);
    report.points.push_back(std::move(point));
  }

  if (!shift) {
    report.gates.push_back(ZeroBiasGate("zero_bias", *report.points[0].bias, floors[0]));
  } else {
    std::vector<size_t> order(report.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return report.points[a].parameter < report.points[b].parameter;
    });
    bool monotone = true;
    std::string detail;
    for (size_t i = 0; i + 1 < order.size(); ++i) {
      const BiasEstimate& lo = *report.points[order[i]].bias;
      const BiasEstimate& hi = *report.points[order[i + 1]].bias;
      const double slack =
          kMonotoneGate * std::hypot(MaxAbsSe(lo), MaxAbsSe(hi));
      const bool ok = hi.MaxAbsMean() <= lo.MaxAbsMean() + slack;
      monotone = monotone && ok;
      absl::StrAppend(&detail, i ? "; " : "", "shift ",
                      Fmt(report.points[order[i]].parameter), "->",
                      Fmt(report.points[order[i + 1]].parameter), ": ",
                      Fmt(lo.MaxAbsMean()), " -> ", Fmt(hi.MaxAbsMean()),
                      ok ? "" : " (increase beyond 2 SE)");
    }
    report.gates.push_back({"bias_non_increasing", monotone, detail});
    report.gates.push_back(ZeroBiasGate(
        "zero_bias_at_largest_shift", *report.points[order.back()].bias,
        floors[order.back()]));
  }
  // With common random numbers every sweep point shares one control sample.
  const Gate control =
      ZeroBiasGate("control_zero_bias", *report.points[0].control, 0.0);
  report.gates.push_back(control);
  report.gates.push_back(FeasibilityGate(report.solver));
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

absl::StatusOr<ExperimentReport> RunConvergenceExperiment(
    const ExperimentConfig& config, const RunOptions& options) {
  if (config.kind != ExperimentKind::kConvergencePS) {
    return absl::InvalidArgumentError("not a convergence experiment");
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config;
  const uint64_t bootstrap_seed = DeriveSeed(config.master_seed, "bootstrap");

  for (size_t k = 0; k < config.dimensions.size(); ++k) {
    const int n = config.dimensions[k];
    absl::StatusOr<MarginalSamples> samples =
        SampleMarginals(config, n, static_cast<int>(k), options);
    if (!samples.ok()) return samples.status();
    absl::StatusOr<VarianceEstimate> variance =
        EstimateVariance(samples->residual);
    if (!variance.ok()) return variance.status();
    std::sort(samples->residual.begin(), samples->residual.end());
    std::sort(samples->reference.begin(), samples->reference.end());
    absl::StatusOr<double> w1 =
        Wasserstein1Sorted(samples->residual, samples->reference);
    if (!w1.ok()) return w1.status();

    SweepPoint point;
    point.parameter = n;
    point.dimension = n;
    point.variance = *variance;
    point.analytic_variance =
        config.noise.Variance() * (1.0 - 1.0 / static_cast<double>(n));
    point.wasserstein = *w1;
    point.wasserstein_se = BootstrapWassersteinSe(
        samples->residual, samples->reference, config.bootstrap,
        bootstrap_seed, k * static_cast<uint64_t>(config.bootstrap),
        options.workers);
    report.solver.projections += config.trials;
    report.points.push_back(std::move(point));
  }

  int inversions = 0;
  bool inversions_small = true;
  std::string detail;
  for (size_t k = 0; k + 1 < report.points.size(); ++k) {
    const SweepPoint& a = report.points[k];
    const SweepPoint& b = report.points[k + 1];
    absl::StrAppend(&detail, k ? "; " : "", "n=", a.dimension, "->",
                    b.dimension, ": ", Fmt(*a.wasserstein), " -> ",
                    Fmt(*b.wasserstein));
    if (*b.wasserstein >= *a.wasserstein) {
      ++inversions;
      const double slack =
          kMonotoneGate * std::hypot(*a.wasserstein_se, *b.wasserstein_se);
      if (*b.wasserstein - *a.wasserstein > slack) inversions_small = false;
      absl::StrAppend(&detail, " (inversion)");
    }
  }
  report.gates.push_back({"wasserstein_decreasing",
                          inversions == 0 || (inversions == 1 && inversions_small),
                          detail});
  bool variance_ok = true;
  std::string variance_detail;
  for (size_t k = 0; k < report.points.size(); ++k) {
    const SweepPoint& p = report.points[k];
    const double z = std::abs(p.variance->variance - *p.analytic_variance) /
                     p.variance->standard_error;
    const bool ok = std::abs(p.variance->variance - *p.analytic_variance) <=
                    kVarianceGate * p.variance->standard_error;
    variance_ok = variance_ok && ok;
    absl::StrAppend(&variance_detail, k ? "; " : "", "n=", p.dimension, ": ",
                    Fmt(p.variance->variance), " vs ",
                    Fmt(*p.analytic_variance), " (", Fmt(z), " SE)");
  }
  report.gates.push_back(
      {"variance_matches_analytic", variance_ok, variance_detail});
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

absl::StatusOr<ExperimentReport> RunVarianceExperiment(
    const ExperimentConfig& config, const RunOptions& options) {
  if (config.kind != ExperimentKind::kVariancePS) {
    return absl::InvalidArgumentError("not a variance experiment");
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config = config;
  bool ok_all = true;
  std::string detail;
  for (size_t k = 0; k < config.dimensions.size(); ++k) {
    const int n = config.dimensions[k];
    absl::StatusOr<MarginalSamples> samples =
        SampleMarginals(config, n, static_cast<int>(k), options);
    if (!samples.ok()) return samples.status();
    absl::StatusOr<VarianceEstimate> variance =
        EstimateVariance(samples->residual);
    if (!variance.ok()) return variance.status();
    SweepPoint point;
    point.parameter = n;
    point.dimension = n;
    point.variance = *variance;
    point.analytic_variance =
        config.noise.Variance() * (1.0 - 1.0 / static_cast<double>(n));
    const double diff = std::abs(variance->variance - *point.analytic_variance);
    const bool ok = diff <= kVarianceGate * variance->standard_error;
    ok_all = ok_all && ok;
    absl::StrAppend(&detail, k ? "; " : "", "n=", n, ": empirical ",
                    Fmt(variance->variance), " (SE ",
                    Fmt(variance->standard_error), ") vs analytic ",
                    Fmt(*point.analytic_variance));
    report.solver.projections += config.trials;
    report.points.push_back(std::move(point));
  }
  report.gates.push_back({"variance_matches_analytic", ok_all, detail});
  const SweepPoint& a = report.points[0];
  const SweepPoint& b = report.points[1];
  const double analytic_ratio = *a.analytic_variance / *b.analytic_variance;
  const double empirical_ratio = a.variance->variance / b.variance->variance;
  report.gates.push_back(
      {"variance_ratio", true,
       absl::StrCat("analytic ratio ", Fmt(analytic_ratio), ", empirical ratio ",
                    Fmt(empirical_ratio), ", analytic gap ",
                    Fmt(std::abs(1.0 - analytic_ratio)))});
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

absl::StatusOr<ExperimentReport> RunBoundCheck(const ExperimentConfig& config,
                                               const RunOptions& options) {
  absl::StatusOr<Hierarchy> h = LoadInstance(config);
  if (!h.ok()) return h.status();
  return RunBoundCheck(config, *h, options);
}

absl::StatusOr<ExperimentReport> RunBoundCheck(const ExperimentConfig& config,
                                               const Hierarchy& instance,
                                               const RunOptions& options) {
  if (config.kind != ExperimentKind::kBoundCheck) {
    return absl::InvalidArgumentError("not a bound check");
  }
  if (absl::Status s = ValidateExperimentConfig(config); !s.ok()) return s;
  const auto start = std::chrono::steady_clock::now();
  absl::StatusOr<HierarchySystem> hs = HierarchyToSystem(instance, false);
  if (!hs.ok()) return hs.status();
  const Eigen::VectorXd truth = instance.Counts();
  absl::StatusOr<double> c_prime =
      config.c_prime ? absl::StatusOr<double>(*config.c_prime)
                     : SupDistanceCprime(hs->system, truth);
  if (!c_prime.ok()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "C' is not computable for this instance (", c_prime.status().message(),
        "); set c_prime in the config"));
  }
  SweepPoint point;
  point.dimension = static_cast<int>(truth.size());
  point.min_true_count = MinCoeff(truth);
  point.parameter = point.min_true_count;
  point.c_prime = *c_prime;
  BiasBoundInputs in{point.min_true_count, config.noise.scale(),
                     point.dimension, *c_prime};
  absl::StatusOr<double> bound =
      config.noise.family() == NoiseFamily::kLaplace ? BiasBound(in)
                                                     : BiasBoundGeometric(in);
  if (!bound.ok()) return bound.status();
  point.bias_bound = *bound;

  SolverOptions solver;
  solver.max_iterations = config.max_iterations;
  absl::StatusOr<BiasRun> run = MeasureProjectionBias(
      hs->system, truth, config.noise, config.trials,
      DeriveSeed(config.master_seed, "trials"), true, options, 0, -1, solver);
  if (!run.ok()) return run.status();
  point.bias = run->bias;
  point.control = run->control;

  ExperimentReport report;
  report.config = config;
  report.solver = run->solver;
  const double measured = run->bias.MaxAbsMean();
  const double se = MaxAbsSe(run->bias);
  report.gates.push_back(
      {"bound_dominates_bias", measured - kBoundGate * se <= *bound,
       absl::StrCat("||bias||_inf ", Fmt(measured), " (SE ", Fmt(se),
                    ") vs bound ", Fmt(*bound), " with r_m ",
                    Fmt(point.min_true_count), ", n ", point.dimension,
                    ", C' ", Fmt(*c_prime), "; margin bound - (bias + 3 SE) = ",
                    Fmt(*bound - (measured + kBoundGate * se)))});
  report.points.push_back(std::move(point));
  report.gates.push_back(FeasibilityGate(report.solver));
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

absl::StatusOr<ExperimentReport> RunExperiment(const ExperimentConfig& config,
                                               const RunOptions& options) {
  switch (config.kind) {
    case ExperimentKind::kBiasP:
    case ExperimentKind::kBiasPplusShift:
      return RunBiasExperiment(config, options);
    case ExperimentKind::kConvergencePS:
      return RunConvergenceExperiment(config, options);
    case ExperimentKind::kVariancePS:
      return RunVarianceExperiment(config, options);
    case ExperimentKind::kBoundCheck:
      return RunBoundCheck(config, options);
  }
  return absl::InvalidArgumentError("unknown experiment kind");
}

std::string ReportToJson(const ExperimentReport& report) {
  ordered_json out;
  out["kind"] = ExperimentKindName(report.config.kind);
  ordered_json config;
  for (absl::string_view line :
       absl::StrSplit(FormatExperimentConfig(report.config), '\n',
                      absl::SkipEmpty())) {
    const size_t eq = line.find(" = ");
    const std::string key(line.substr(0, eq));
    // The output location is not part of the result.
    if (key == "output_dir") continue;
    config[key] = std::string(line.substr(eq + 3));
  }
  out["config"] = std::move(config);
  ordered_json points = ordered_json::array();
  for (const SweepPoint& p : report.points) {
    ordered_json j;
    j["parameter"] = p.parameter;
    j["dimension"] = p.dimension;
    j["min_true_count"] = p.min_true_count;
    if (p.bias) j["bias"] = BiasJson(*p.bias);
    if (p.control) j["control"] = BiasJson(*p.control);
    if (p.variance) {
      j["variance"] = {{"empirical", p.variance->variance},
                       {"standard_error", p.variance->standard_error},
                       {"samples", p.variance->samples}};
    }
    if (p.analytic_variance) j["analytic_variance"] = *p.analytic_variance;
    if (p.wasserstein) j["wasserstein"] = *p.wasserstein;
    if (p.wasserstein_se) j["wasserstein_se"] = *p.wasserstein_se;
    if (p.c_prime) j["c_prime"] = *p.c_prime;
    if (p.bias_bound) j["bias_bound"] = *p.bias_bound;
    points.push_back(std::move(j));
  }
  out["points"] = std::move(points);
  ordered_json gates = ordered_json::array();
  for (const Gate& g : report.gates) {
    gates.push_back({{"name", g.name}, {"pass", g.pass}, {"detail", g.detail}});
  }
  out["gates"] = std::move(gates);
  out["all_gates_pass"] = report.AllGatesPass();
  const SolverSummary& s = report.solver;
  out["solver"] = {{"projections", s.projections},
                   {"total_iterations", s.total_iterations},
                   {"max_iterations", s.max_iterations},
                   {"max_residual_inf", s.max_residual_inf},
                   {"clamped_coordinates", s.clamped_coordinates},
                   {"infeasible_outputs", s.infeasible_outputs}};
  return out.dump(2) + "\n";
}

std::string ReportToSummaryCsv(const ExperimentReport& report) {
  std::string out = "quantity,index,value\n";
  auto row = [&](absl::string_view q, size_t i, double v) {
    absl::StrAppend(&out, q, ",", i, ",", FormatDouble(v), "\n");
  };
  for (size_t k = 0; k < report.points.size(); ++k) {
    const SweepPoint& p = report.points[k];
    row("parameter", k, p.parameter);
    row("dimension", k, p.dimension);
    row("min_true_count", k, p.min_true_count);
    if (p.bias) {
      row("max_abs_bias", k, p.bias->MaxAbsMean());
      row("max_abs_bias_se", k, MaxAbsSe(*p.bias));
    }
    if (p.control) {
      row("control_max_abs_bias", k, p.control->MaxAbsMean());
      row("control_max_abs_bias_se", k, MaxAbsSe(*p.control));
    }
    if (p.variance) {
      row("variance_empirical", k, p.variance->variance);
      row("variance_se", k, p.variance->standard_error);
    }
    if (p.analytic_variance) row("variance_analytic", k, *p.analytic_variance);
    if (p.wasserstein) row("wasserstein", k, *p.wasserstein);
    if (p.wasserstein_se) row("wasserstein_se", k, *p.wasserstein_se);
    if (p.c_prime) row("c_prime", k, *p.c_prime);
    if (p.bias_bound) row("bias_bound", k, *p.bias_bound);
  }
  for (size_t k = 0; k < report.gates.size(); ++k) {
    absl::StrAppend(&out, "gate:", report.gates[k].name, ",", k, ",",
                    report.gates[k].pass ? 1 : 0, "\n");
  }
  return out;
}

absl::Status WriteReportFiles(const ExperimentReport& report,
                              const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot create ", directory, ": ", ec.message()));
  }
  const std::filesystem::path dir(directory);
  auto write = [&](const std::string& name,
                   const std::string& content) -> absl::Status {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
      return absl::UnavailableError(
          absl::StrCat("cannot write ", (dir / name).string()));
    }
    return absl::OkStatus();
  };
  if (absl::Status s = write("report.json", ReportToJson(report)); !s.ok()) {
    return s;
  }
  if (absl::Status s = write("summary.csv", ReportToSummaryCsv(report));
      !s.ok()) {
    return s;
  }
  return write("timing.json",
               absl::StrCat("{\"wall_seconds\": ",
                            FormatDouble(report.wall_seconds), "}\n"));
}

}  // namespace dppost
