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

#ifndef DPPOST_NOISE_H_
#define DPPOST_NOISE_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "Eigen/Core"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace dppost {

// A reproducible random stream. The sequence of draws is a pure function of
// (master_seed, stream_index); distinct indices seed independent engines
// through a SplitMix64 hash, so trial t of an experiment always consumes the
// same numbers regardless of which thread runs it.
class RngStream {
 public:
  RngStream(uint64_t master_seed, uint64_t stream_index);

  uint64_t master_seed() const { return master_seed_; }
  uint64_t stream_index() const { return stream_index_; }

  uint64_t NextBits() { return engine_(); }

  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double NextOpenUniform();

  // Uniform integer in [lo, hi] by rejection; portable across standard
  // libraries, unlike std::uniform_int_distribution.
  int64_t NextInt(int64_t lo, int64_t hi);

 private:
  uint64_t master_seed_;
  uint64_t stream_index_;
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer. Bijective on 64-bit words.
uint64_t MixBits(uint64_t x);

// Derives a master seed for an independent family of streams, e.g. the
// control sample of an experiment versus its projected sample.
uint64_t DeriveSeed(uint64_t master_seed, absl::string_view purpose);

enum class NoiseFamily { kLaplace, kTwoSidedGeometric };

absl::string_view NoiseFamilyName(NoiseFamily family);
absl::StatusOr<NoiseFamily> ParseNoiseFamily(absl::string_view name);

// Sensitivity and privacy budget from which a noise scale was derived.
struct NoiseProvenance {
  double sensitivity = 0.0;
  double epsilon = 0.0;

  friend bool operator==(const NoiseProvenance&,
                         const NoiseProvenance&) = default;
};

// A noise distribution: Laplace with scale lambda, or the two-sided
// geometric (discrete Laplace) with ratio a in (0, 1).
class NoiseSpec {
 public:
  static absl::StatusOr<NoiseSpec> Laplace(double scale);
  static absl::StatusOr<NoiseSpec> TwoSidedGeometric(double ratio);

  // Laplace mechanism: lambda = sensitivity / epsilon. Needs sensitivity > 0
  // since a spec always carries a positive scale.
  static absl::StatusOr<NoiseSpec> LaplaceMechanism(double sensitivity,
                                                    double epsilon);

  // Geometric mechanism with a = exp(-epsilon / sensitivity).
  static absl::StatusOr<NoiseSpec> GeometricMechanism(double sensitivity,
                                                      double epsilon);

  NoiseFamily family() const { return family_; }
  // Laplace lambda or geometric ratio a.
  double scale() const { return scale_; }
  const std::optional<NoiseProvenance>& provenance() const {
    return provenance_;
  }

  // Variance of a single draw: 2 lambda^2 or 2a / (1 - a)^2.
  double Variance() const;

  // Density (Laplace) or mass (geometric; non-integer x has mass 0).
  double Density(double x) const;

  double Sample(RngStream& rng) const;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;

 private:
  NoiseSpec(NoiseFamily family, double scale,
            std::optional<NoiseProvenance> provenance)
      : family_(family), scale_(scale), provenance_(provenance) {}

  NoiseFamily family_;
  double scale_;
  std::optional<NoiseProvenance> provenance_;
};

// Laplace mechanism scale: sensitivity / epsilon.
absl::StatusOr<double> MechanismScale(double sensitivity, double epsilon);

// (1 / 2 lambda) exp(-|x| / lambda).
double LaplacePdf(double x, double lambda);

// ((1 - a) / (1 + a)) a^|k|.
double GeometricPmf(int64_t k, double a);

double SampleLaplace(double lambda, RngStream& rng);
int64_t SampleTwoSidedGeometric(double a, RngStream& rng);

// n i.i.d. draws from `spec`.
absl::StatusOr<Eigen::VectorXd> SampleVector(const NoiseSpec& spec, int n,
                                             RngStream& rng);

// Same as SampleVector without the argument check; `out` must be sized.
void FillSamples(const NoiseSpec& spec, RngStream& rng,
                 Eigen::Ref<Eigen::VectorXd> out);

}  // namespace dppost

#endif  // DPPOST_NOISE_H_
