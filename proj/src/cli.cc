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

#include "dppost/cli.h"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "Eigen/Core"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/ascii.h"
#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "dppost/analysis.h"
#include "dppost/constraints.h"
#include "dppost/harness.h"
#include "dppost/hierarchy_io.h"
#include "dppost/noise.h"
#include "dppost/plot.h"
#include "dppost/projection.h"

namespace dppost {

namespace {

int ExitCodeFor(const absl::Status& status) {
  if (IsInfeasible(status) || IsConvergenceFailure(status)) return kExitSolver;
  switch (status.code()) {
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kPermissionDenied:
    case absl::StatusCode::kUnavailable:
    case absl::StatusCode::kDataLoss:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

int Fail(std::ostream& err, const absl::Status& status) {
  err << "error: " << status.message() << "\n";
  return ExitCodeFor(status);
}

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string JoinVector(const Eigen::VectorXd& v) {
  std::vector<std::string> parts;
  parts.reserve(v.size());
  for (double d : v) parts.push_back(FormatDouble(d));
  return absl::StrJoin(parts, ",");
}

// A vector given on the command line: plain values, or values keyed by
// hierarchy node id when read from an `id,parent_id,count` file.
struct InputVector {
  std::vector<double> values;
  std::map<std::string, double> by_id;
};

bool LooksInline(absl::string_view text) {
  for (char c : text) {
    if (!absl::ascii_isdigit(c) && !absl::ascii_isspace(c) &&
        absl::string_view("+-.,eE").find(c) == absl::string_view::npos) {
      return false;
    }
  }
  return true;
}

absl::StatusOr<InputVector> ReadInputVector(const std::string& arg) {
  std::string text = arg;
  if (!LooksInline(arg) || std::filesystem::is_regular_file(arg)) {
    absl::StatusOr<std::string> content = ReadFile(arg);
    if (!content.ok()) return content.status();
    text = *std::move(content);
  }
  InputVector out;
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipWhitespace());
  if (!lines.empty() &&
      absl::StartsWith(absl::StripAsciiWhitespace(lines[0]), "id,")) {
    for (size_t i = 1; i < lines.size(); ++i) {
      std::vector<absl::string_view> f = absl::StrSplit(lines[i], ',');
      if (f.size() != 3) {
        return absl::InvalidArgumentError(
            absl::StrCat("input line ", i + 1, ": expected id,parent_id,count"));
      }
      absl::StatusOr<double> v = ParseDouble(f[2]);
      if (!v.ok()) return v.status();
      const std::string id(absl::StripAsciiWhitespace(f[0]));
      if (!out.by_id.emplace(id, *v).second) {
        return absl::InvalidArgumentError(absl::StrCat("duplicate id ", id));
      }
    }
    return out;
  }
  for (absl::string_view line : lines) {
    for (absl::string_view field :
         absl::StrSplit(line, ',', absl::SkipWhitespace())) {
      absl::StatusOr<double> v = ParseDouble(field);
      if (!v.ok()) return v.status();
      out.values.push_back(*v);
    }
  }
  if (out.values.empty()) {
    return absl::InvalidArgumentError("input vector is empty");
  }
  return out;
}

Eigen::VectorXd ToEigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

struct ProjectFlags {
  std::string in;
  double sum = 0.0;
  std::string constraints;
  bool nonneg = false;
  bool leaves_only = false;
  double tol = 0.0;
  int max_iterations = 100000;
  const CLI::Option* sum_opt = nullptr;
  const CLI::Option* constraints_opt = nullptr;
  const CLI::Option* tol_opt = nullptr;
};

int RunProject(const ProjectFlags& flags, std::ostream& out,
               std::ostream& err) {
  const bool has_sum = flags.sum_opt->count() > 0;
  const bool has_constraints = flags.constraints_opt->count() > 0;
  if (has_sum == has_constraints) {
    err << "error: give exactly one of --sum or --constraints\n";
    return kExitUsage;
  }
  if (flags.tol_opt->count() > 0 && !(flags.tol > 0.0)) {
    err << "error: --tol must be positive\n";
    return kExitUsage;
  }
  absl::StatusOr<InputVector> input = ReadInputVector(flags.in);
  if (!input.ok()) return Fail(err, input.status());

  SolverOptions options;
  options.max_iterations = flags.max_iterations;
  if (flags.tol_opt->count() > 0) options.feasibility_tolerance = flags.tol;

  LinearSystem system;
  Eigen::VectorXd x;
  if (has_sum) {
    if (!input->by_id.empty()) {
      err << "error: --sum needs a plain list of values\n";
      return kExitUsage;
    }
    x = ToEigen(input->values);
    absl::StatusOr<LinearSystem> s = LinearSystem::Create(
        Eigen::MatrixXd::Ones(1, x.size()), Eigen::VectorXd::Constant(1, flags.sum),
        flags.nonneg);
    if (!s.ok()) return Fail(err, s.status());
    system = *std::move(s);
  } else {
    absl::StatusOr<Hierarchy> h = ReadHierarchyFile(flags.constraints);
    if (!h.ok()) return Fail(err, h.status());
    absl::StatusOr<HierarchySystem> hs = HierarchyToSystem(*h, flags.leaves_only);
    if (!hs.ok()) return Fail(err, hs.status());
    system = hs->system;
    system.nonneg = flags.nonneg;
    if (!input->by_id.empty()) {
      x.resize(hs->variable_nodes.size());
      for (size_t i = 0; i < hs->variable_nodes.size(); ++i) {
        const std::string& id = h->nodes()[hs->variable_nodes[i]].id;
        auto it = input->by_id.find(id);
        if (it == input->by_id.end()) {
          err << "error: input has no value for node " << id << "\n";
          return kExitUsage;
        }
        x[i] = it->second;
      }
    } else {
      x = ToEigen(input->values);
    }
    if (x.size() != system.cols()) {
      err << "error: input has " << x.size() << " values but the constraints "
          << "have " << system.cols() << " variables\n";
      return kExitUsage;
    }
  }

  absl::StatusOr<ProjectionResult> result;
  if (has_sum) {
    result = flags.nonneg ? ProjectSumNonneg(x, flags.sum)
                          : ProjectSum(x, flags.sum);
  } else {
    result = flags.nonneg ? ProjectAffineNonneg(x, system, options)
                          : ProjectAffine(x, system);
  }
  if (!result.ok()) {
    err << "error: " << result.status().message() << "\n";
    if (std::optional<Eigen::VectorXd> last = LastIterate(result.status())) {
      const double residual =
          (system.a * *last - system.b).lpNorm<Eigen::Infinity>();
      err << absl::StrFormat(
          "last iterate: residual_inf=%.6g min_coordinate=%.6g\n", residual,
          last->size() ? last->minCoeff() : 0.0);
    } else if (IsInfeasible(result.status())) {
      err << absl::StrFormat(
          "input: residual_inf=%.6g min_coordinate=%.6g\n",
          (system.a * x - system.b).lpNorm<Eigen::Infinity>(), x.minCoeff());
    }
    return ExitCodeFor(result.status());
  }
  const double tol = options.ToleranceFor(x);
  absl::StatusOr<std::vector<Violation>> violations =
      CheckFeasible(result->solution, system, tol);
  if (!violations.ok()) return Fail(err, violations.status());
  if (!violations->empty()) {
    err << "error: projected vector violates " << violations->size()
        << " constraints at tolerance " << tol << "\n";
    return kExitSolver;
  }
  out << JoinVector(result->solution) << "\n";
  err << absl::StrFormat(
      "iterations=%d objective=%.12g residual_inf=%.3g active_nonneg=%d\n",
      result->iterations, result->objective, result->residual_inf,
      result->active_nonneg);
  return kExitOk;
}

struct NoiseFlags {
  std::string family = "laplace";
  double scale = 0.0;
  double sensitivity = 1.0;
  double epsilon = 0.0;
  int n = 1;
  uint64_t seed = 0;
  uint64_t stream = 0;
  const CLI::Option* scale_opt = nullptr;
  const CLI::Option* epsilon_opt = nullptr;
};

int RunNoise(const NoiseFlags& flags, std::ostream& out, std::ostream& err) {
  absl::StatusOr<NoiseFamily> family = ParseNoiseFamily(flags.family);
  if (!family.ok()) return Fail(err, family.status());
  const bool has_scale = flags.scale_opt->count() > 0;
  if (has_scale == (flags.epsilon_opt->count() > 0)) {
    err << "error: give exactly one of --scale or --epsilon\n";
    return kExitUsage;
  }
  absl::StatusOr<NoiseSpec> spec;
  if (*family == NoiseFamily::kLaplace) {
    spec = has_scale ? NoiseSpec::Laplace(flags.scale)
                     : NoiseSpec::LaplaceMechanism(flags.sensitivity,
                                                   flags.epsilon);
  } else {
    spec = has_scale ? NoiseSpec::TwoSidedGeometric(flags.scale)
                     : NoiseSpec::GeometricMechanism(flags.sensitivity,
                                                     flags.epsilon);
  }
  if (!spec.ok()) return Fail(err, spec.status());
  RngStream rng(flags.seed, flags.stream);
  absl::StatusOr<Eigen::VectorXd> draws = SampleVector(*spec, flags.n, rng);
  if (!draws.ok()) return Fail(err, draws.status());
  out << JoinVector(*draws) << "\n";
  return kExitOk;
}

struct FormulaFlags {
  std::string name;
  double lambda = 0.0;
  double a = 0.0;
  double r = 0.0;
  double rm = 0.0;
  double cprime = 0.0;
  int n = 0;
  std::map<std::string, const CLI::Option*> options;

  bool Has(const std::string& flag) const {
    return options.at(flag)->count() > 0;
  }
};

int RunFormula(const FormulaFlags& flags, std::ostream& out,
               std::ostream& err) {
  auto require = [&](std::initializer_list<const char*> names) {
    std::vector<std::string> missing;
    for (const char* name : names) {
      if (!flags.Has(name)) missing.push_back(absl::StrCat("--", name));
    }
    if (!missing.empty()) {
      err << "error: formula " << flags.name << " needs "
          << absl::StrJoin(missing, ", ") << "\n";
    }
    return missing.empty();
  };
  absl::StatusOr<double> value;
  if (flags.name == "variance") {
    if (!require({"lambda", "n"})) return kExitUsage;
    value = MarginalErrorVariance(flags.lambda, flags.n);
  } else if (flags.name == "ball-laplace") {
    if (!require({"r", "n", "lambda"})) return kExitUsage;
    value = L1BallProbLaplace({flags.r, flags.n, flags.lambda});
  } else if (flags.name == "ball-geom") {
    if (!require({"r", "n", "a"})) return kExitUsage;
    if (flags.r != std::floor(flags.r) || std::abs(flags.r) > 1e15) {
      err << "error: --r must be an integer for the geometric ball\n";
      return kExitUsage;
    }
    value = L1BallProbGeometric(static_cast<int64_t>(flags.r), flags.a,
                                flags.n);
  } else if (flags.name == "bias-bound") {
    if (!require({"rm", "n", "cprime"})) return kExitUsage;
    if (flags.Has("lambda") == flags.Has("a")) {
      err << "error: bias-bound needs exactly one of --lambda or --a\n";
      return kExitUsage;
    }
    if (flags.Has("lambda")) {
      value = BiasBound({flags.rm, flags.lambda, flags.n, flags.cprime});
    } else {
      value = BiasBoundGeometric({flags.rm, flags.a, flags.n, flags.cprime});
    }
  } else {
    err << "error: unknown formula '" << flags.name
        << "' (expected ball-laplace, ball-geom, bias-bound or variance)\n";
    return kExitUsage;
  }
  if (!value.ok()) {
    err << "error: " << value.status().message() << "\n";
    return kExitUsage;
  }
  out << absl::StrFormat("%.12g\n", *value);
  return kExitOk;
}

struct ExperimentFlags {
  std::string config;
  int workers = 1;
  std::string out_dir;
  const CLI::Option* out_opt = nullptr;
};

int RunExperimentCommand(const ExperimentFlags& flags, std::ostream& out,
                         std::ostream& err) {
  if (flags.workers < 1) {
    err << "error: --workers must be >= 1\n";
    return kExitUsage;
  }
  absl::StatusOr<ExperimentConfig> config = ReadExperimentConfig(flags.config);
  if (!config.ok()) return Fail(err, config.status());
  if (flags.out_opt->count() > 0) config->output_dir = flags.out_dir;
  if (absl::Status s = ValidateExperimentConfig(*config); !s.ok()) {
    return Fail(err, s);
  }

  std::error_code ec;
  std::filesystem::create_directories(config->output_dir, ec);
  if (ec) {
    err << "error: cannot create " << config->output_dir << ": "
        << ec.message() << "\n";
    return kExitIo;
  }
  RunOptions options;
  options.workers = flags.workers;
  std::unique_ptr<std::ofstream> residuals;
  const std::filesystem::path residuals_path =
      std::filesystem::path(config->output_dir) / "residuals.csv";
  if (config->write_residuals) {
    const std::filesystem::path& path = residuals_path;
    residuals = std::make_unique<std::ofstream>(path, std::ios::binary |
                                                          std::ios::trunc);
    if (!*residuals) {
      err << "error: cannot write " << path.string() << "\n";
      return kExitIo;
    }
    const bool sweep = config->kind == ExperimentKind::kBiasPplusShift ||
                       config->kind == ExperimentKind::kConvergencePS ||
                       config->kind == ExperimentKind::kVariancePS;
    *residuals << (sweep ? "sweep,trial,coordinate,value\n"
                         : "trial,coordinate,value\n");
    options.residuals = residuals.get();
  }
  absl::StatusOr<ExperimentReport> report = RunExperiment(*config, options);
  if (!report.ok()) {
    if (residuals) {
      residuals.reset();
      std::filesystem::remove(residuals_path, ec);
    }
    return Fail(err, report.status());
  }
  if (residuals) {
    residuals->close();
    if (!*residuals) {
      err << "error: failed writing residuals.csv\n";
      return kExitIo;
    }
  }
  if (absl::Status s = WriteReportFiles(*report, config->output_dir); !s.ok()) {
    err << "error: " << s.message() << "\n";
    return kExitIo;
  }
  std::vector<std::string> failing;
  for (const Gate& g : report->gates) {
    out << (g.pass ? "PASS " : "FAIL ") << g.name << ": " << g.detail << "\n";
    if (!g.pass) failing.push_back(g.name);
  }
  if (!failing.empty()) {
    err << "failing gates: " << absl::StrJoin(failing, ", ") << "\n";
    return kExitGateFailure;
  }
  return kExitOk;
}

struct PlotFlags {
  std::string csv;
  std::string out_path;
  SvgOptions svg;
};

int RunPlot(const PlotFlags& flags, std::ostream& out, std::ostream& err) {
  absl::StatusOr<std::string> text = ReadFile(flags.csv);
  if (!text.ok()) return Fail(err, text.status());
  absl::StatusOr<std::vector<ResidualPanel>> panels = ParseResidualCsv(*text);
  if (!panels.ok()) return Fail(err, panels.status());
  absl::StatusOr<std::string> svg = RenderHistogramSvg(*panels, flags.svg);
  if (!svg.ok()) return Fail(err, svg.status());
  if (flags.out_path.empty() || flags.out_path == "-") {
    out << *svg;
    return kExitOk;
  }
  std::ofstream file(flags.out_path, std::ios::binary | std::ios::trunc);
  file << *svg;
  if (!file) {
    err << "error: cannot write " << flags.out_path << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Post-processing of differentially private counts."};
  app.name("dppost");
  app.require_subcommand(1);

  ProjectFlags project;
  CLI::App* project_cmd = app.add_subcommand(
      "project", "Project a vector onto a constraint set.");
  project_cmd
      ->add_option("--in", project.in,
                   "Comma-separated values, or a file with one value per "
                   "line or an id,parent_id,count table")
      ->required();
  project.sum_opt =
      project_cmd->add_option("--sum", project.sum, "Single-sum constraint");
  project.constraints_opt = project_cmd->add_option(
      "--constraints", project.constraints, "Hierarchy file (CSV or JSON)");
  project_cmd->add_flag("--nonneg", project.nonneg, "Also require v >= 0");
  project_cmd->add_flag("--leaves-only", project.leaves_only,
                        "Use only the leaves of the hierarchy as variables");
  project.tol_opt =
      project_cmd->add_option("--tol", project.tol, "Feasibility tolerance");
  project_cmd->add_option("--max-iterations", project.max_iterations,
                          "Iteration cap of the iterative solver");

  NoiseFlags noise;
  CLI::App* noise_cmd = app.add_subcommand("noise", "Draw noise samples.");
  noise_cmd->add_option("--family", noise.family, "laplace or geometric");
  noise.scale_opt = noise_cmd->add_option(
      "--scale", noise.scale, "Laplace scale or geometric ratio");
  noise_cmd->add_option("--sensitivity", noise.sensitivity,
                        "Query sensitivity");
  noise.epsilon_opt =
      noise_cmd->add_option("--epsilon", noise.epsilon, "Privacy budget");
  noise_cmd->add_option("--n", noise.n, "Number of draws");
  noise_cmd->add_option("--seed", noise.seed, "Master seed");
  noise_cmd->add_option("--stream", noise.stream, "Stream index");

  FormulaFlags formula;
  CLI::App* formula_cmd =
      app.add_subcommand("formula", "Evaluate an analytic quantity.");
  formula_cmd
      ->add_option("name", formula.name,
                   "ball-laplace, ball-geom, bias-bound or variance")
      ->required();
  formula.options["lambda"] =
      formula_cmd->add_option("--lambda", formula.lambda, "Laplace scale");
  formula.options["a"] =
      formula_cmd->add_option("--a", formula.a, "Geometric ratio");
  formula.options["r"] = formula_cmd->add_option("--r", formula.r, "Radius");
  formula.options["rm"] =
      formula_cmd->add_option("--rm", formula.rm, "Smallest true count");
  formula.options["cprime"] = formula_cmd->add_option(
      "--cprime", formula.cprime, "sup over K of ||v - x||_inf");
  formula.options["n"] = formula_cmd->add_option("--n", formula.n, "Dimension");

  ExperimentFlags experiment;
  CLI::App* experiment_cmd =
      app.add_subcommand("experiment", "Run a Monte Carlo experiment.");
  experiment_cmd->add_option("config", experiment.config, "Config file")
      ->required();
  experiment_cmd->add_option("--workers", experiment.workers,
                             "Worker threads");
  experiment.out_opt = experiment_cmd->add_option(
      "--out", experiment.out_dir, "Output directory (overrides the config)");

  PlotFlags plot;
  CLI::App* plot_cmd =
      app.add_subcommand("plot", "Render residual histograms as SVG.");
  plot_cmd->add_option("csv", plot.csv, "residuals.csv")->required();
  plot_cmd->add_option("--bins", plot.svg.bins, "Bins per histogram");
  plot_cmd->add_option("--out", plot.out_path, "SVG path (default stdout)");
  plot_cmd->add_option("--columns", plot.svg.columns, "Panels per row");
  plot_cmd->add_option("--width", plot.svg.panel_width, "Panel width");
  plot_cmd->add_option("--height", plot.svg.panel_height, "Panel height");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (*project_cmd) return RunProject(project, out, err);
  if (*noise_cmd) return RunNoise(noise, out, err);
  if (*formula_cmd) return RunFormula(formula, out, err);
  if (*experiment_cmd) return RunExperimentCommand(experiment, out, err);
  if (*plot_cmd) return RunPlot(plot, out, err);
  return kExitUsage;
}

}  // namespace dppost
