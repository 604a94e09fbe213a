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

#ifndef DPPOST_PLOT_H_
#define DPPOST_PLOT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace dppost {

// Equal-width bins over [lo, hi]; the last bin is closed on the right.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int64_t> counts;

  double BinWidth() const;
  int64_t Total() const;
};

// Bins span the data range. A constant sample gets the range [v - 0.5,
// v + 0.5].
absl::StatusOr<Histogram> BuildHistogram(std::span<const double> values,
                                         int bins);

struct ResidualPanel {
  std::string label;
  std::vector<double> values;
};

// Reads a residuals CSV with header `trial,coordinate,value` or
// `sweep,trial,coordinate,value` and groups values by (sweep, coordinate),
// in ascending order. Fails with InvalidArgument when there are no rows.
absl::StatusOr<std::vector<ResidualPanel>> ParseResidualCsv(
    absl::string_view text);

struct SvgOptions {
  int bins = 40;
  int panel_width = 360;
  int panel_height = 220;
  int columns = 2;
};

// One histogram panel per group, as a standalone SVG 1.1 document. Output is
// a pure function of the inputs.
absl::StatusOr<std::string> RenderHistogramSvg(
    const std::vector<ResidualPanel>& panels, const SvgOptions& options = {});

}  // namespace dppost

#endif  // DPPOST_PLOT_H_
