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

#include "dppost/noise.h"

#include <cmath>
#include <cstdint>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"

namespace dppost {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

uint64_t StreamSeed(uint64_t master_seed, uint64_t stream_index) {
  return MixBits(MixBits(master_seed) + MixBits(stream_index + kGolden));
}

}  // namespace

uint64_t MixBits(uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t DeriveSeed(uint64_t master_seed, absl::string_view purpose) {
  // FNV-1a over the tag, then mixed with the seed.
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return MixBits(master_seed ^ MixBits(h));
}

RngStream::RngStream(uint64_t master_seed, uint64_t stream_index)
    : master_seed_(master_seed),
      stream_index_(stream_index),
      engine_(StreamSeed(master_seed, stream_index)) {}

double RngStream::NextOpenUniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

int64_t RngStream::NextInt(int64_t lo, int64_t hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(engine_());
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return lo + static_cast<int64_t>(draw % span);
}

absl::string_view NoiseFamilyName(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::kLaplace:
      return "laplace";
    case NoiseFamily::kTwoSidedGeometric:
      return "geometric";
  }
  return "unknown";
}

absl::StatusOr<NoiseFamily> ParseNoiseFamily(absl::string_view name) {
  if (name == "laplace") return NoiseFamily::kLaplace;
  if (name == "geometric") return NoiseFamily::kTwoSidedGeometric;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown noise family '", name,
                   "', expected 'laplace' or 'geometric'"));
}

absl::StatusOr<NoiseSpec> NoiseSpec::Laplace(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    return absl::InvalidArgumentError(
        absl::StrCat("Laplace scale must be positive and finite, got ", scale));
  }
  return NoiseSpec(NoiseFamily::kLaplace, scale, std::nullopt);
}

absl::StatusOr<NoiseSpec> NoiseSpec::TwoSidedGeometric(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("geometric ratio must lie in (0, 1), got ", ratio));
  }
  return NoiseSpec(NoiseFamily::kTwoSidedGeometric, ratio, std::nullopt);
}

absl::StatusOr<NoiseSpec> NoiseSpec::LaplaceMechanism(double sensitivity,
                                                      double epsilon) {
  absl::StatusOr<double> scale = MechanismScale(sensitivity, epsilon);
  if (!scale.ok()) return scale.status();
  if (*scale == 0.0) {
    return absl::InvalidArgumentError(
        "zero sensitivity needs no noise; a NoiseSpec requires scale > 0");
  }
  return NoiseSpec(NoiseFamily::kLaplace, *scale,
                   NoiseProvenance{sensitivity, epsilon});
}

absl::StatusOr<NoiseSpec> NoiseSpec::GeometricMechanism(double sensitivity,
                                                        double epsilon) {
  if (!(epsilon > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be positive, got ", epsilon));
  }
  if (!(sensitivity > 0.0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "geometric mechanism needs positive sensitivity, got ", sensitivity));
  }
  const double ratio = std::exp(-epsilon / sensitivity);
  if (!(ratio > 0.0 && ratio < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("derived geometric ratio ", ratio, " is outside (0, 1)"));
  }
  return NoiseSpec(NoiseFamily::kTwoSidedGeometric, ratio,
                   NoiseProvenance{sensitivity, epsilon});
}

double NoiseSpec::Variance() const {
  switch (family_) {
    case NoiseFamily::kLaplace:
      return 2.0 * scale_ * scale_;
    case NoiseFamily::kTwoSidedGeometric:
      return 2.0 * scale_ / ((1.0 - scale_) * (1.0 - scale_));
  }
  return 0.0;
}

double NoiseSpec::Density(double x) const {
  if (family_ == NoiseFamily::kLaplace) return LaplacePdf(x, scale_);
  if (x != std::floor(x)) return 0.0;
  return GeometricPmf(static_cast<int64_t>(x), scale_);
}

double NoiseSpec::Sample(RngStream& rng) const {
  if (family_ == NoiseFamily::kLaplace) return SampleLaplace(scale_, rng);
  return static_cast<double>(SampleTwoSidedGeometric(scale_, rng));
}

absl::StatusOr<double> MechanismScale(double sensitivity, double epsilon) {
  if (!(epsilon > 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be positive, got ", epsilon));
  }
  if (!(sensitivity >= 0.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("sensitivity must be non-negative, got ", sensitivity));
  }
  return sensitivity / epsilon;
}

double LaplacePdf(double x, double lambda) {
  return std::exp(-std::abs(x) / lambda) / (2.0 * lambda);
}

double GeometricPmf(int64_t k, double a) {
  const double magnitude = std::abs(static_cast<double>(k));
  return (1.0 - a) / (1.0 + a) * std::pow(a, magnitude);
}

double SampleLaplace(double lambda, RngStream& rng) {
  // Inverse CDF: u - 1/2 carries the sign, 1 - 2|u - 1/2| is uniform on (0, 1].
  const double centered = rng.NextOpenUniform() - 0.5;
  const double magnitude = -lambda * std::log1p(-2.0 * std::abs(centered));
  return centered < 0.0 ? -magnitude : magnitude;
}

int64_t SampleTwoSidedGeometric(double a, RngStream& rng) {
  // Difference of two one-sided geometrics on {0, 1, ...} with P(k) = (1-a)a^k.
  const double log_a = std::log(a);
  auto one_sided = [&]() {
    return static_cast<int64_t>(std::floor(std::log(rng.NextOpenUniform()) /
                                           log_a));
  };
  const int64_t first = one_sided();
  return first - one_sided();
}

absl::StatusOr<Eigen::VectorXd> SampleVector(const NoiseSpec& spec, int n,
                                             RngStream& rng) {
  if (n < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("sample size must be at least 1, got ", n));
  }
  Eigen::VectorXd out(n);
  FillSamples(spec, rng, out);
  return out;
}

void FillSamples(const NoiseSpec& spec, RngStream& rng,
                 Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = spec.Sample(rng);
}

}  // namespace dppost
