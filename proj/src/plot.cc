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

#include "dppost/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "dppost/hierarchy_io.h"

namespace dppost {

namespace {

constexpr int kMaxBins = 10000;
constexpr double kMargin = 28.0;

int FindColumn(const std::vector<std::string>& header, absl::string_view name) {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

double Histogram::BinWidth() const {
  return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size());
}

int64_t Histogram::Total() const {
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  return total;
}

absl::StatusOr<Histogram> BuildHistogram(std::span<const double> values,
                                         int bins) {
  if (bins < 1 || bins > kMaxBins) {
    return absl::InvalidArgumentError(
        absl::StrCat("bins must be in [1, ", kMaxBins, "], got ", bins));
  }
  if (values.empty()) return absl::InvalidArgumentError("no values to bin");
  Histogram h;
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  if (!std::isfinite(*min_it) || !std::isfinite(*max_it)) {
    return absl::InvalidArgumentError("values must be finite");
  }
  h.lo = *min_it;
  h.hi = *max_it;
  if (h.lo == h.hi) {
    h.lo -= 0.5;
    h.hi += 0.5;
  }
  h.counts.assign(bins, 0);
  const double width = h.BinWidth();
  for (double v : values) {
    const int64_t k = static_cast<int64_t>(std::floor((v - h.lo) / width));
    ++h.counts[std::clamp<int64_t>(k, 0, bins - 1)];
  }
  return h;
}

absl::StatusOr<std::vector<ResidualPanel>> ParseResidualCsv(
    absl::string_view text) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipWhitespace());
  if (lines.empty()) return absl::InvalidArgumentError("residual CSV is empty");
  std::vector<std::string> header;
  for (absl::string_view f : absl::StrSplit(lines[0], ',')) {
    header.emplace_back(absl::StripAsciiWhitespace(f));
  }
  const int sweep_col = FindColumn(header, "sweep");
  const int coord_col = FindColumn(header, "coordinate");
  const int value_col = FindColumn(header, "value");
  if (coord_col < 0 || value_col < 0) {
    return absl::InvalidArgumentError(
        "residual CSV header needs 'coordinate' and 'value' columns");
  }
  std::map<std::pair<int64_t, int64_t>, std::vector<double>> groups;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::vector<absl::string_view> fields = absl::StrSplit(lines[i], ',');
    if (fields.size() != header.size()) {
      return absl::InvalidArgumentError(
          absl::StrCat("residual CSV line ", i + 1, ": expected ",
                       header.size(), " fields, got ", fields.size()));
    }
    int64_t sweep = 0;
    int64_t coord = 0;
    if ((sweep_col >= 0 &&
         !absl::SimpleAtoi(absl::StripAsciiWhitespace(fields[sweep_col]),
                           &sweep)) ||
        !absl::SimpleAtoi(absl::StripAsciiWhitespace(fields[coord_col]),
                          &coord)) {
      return absl::InvalidArgumentError(
          absl::StrCat("residual CSV line ", i + 1, ": bad index"));
    }
    absl::StatusOr<double> v = ParseDouble(fields[value_col]);
    if (!v.ok()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "residual CSV line ", i + 1, ": ", v.status().message()));
    }
    groups[{sweep, coord}].push_back(*v);
  }
  if (groups.empty()) {
    return absl::InvalidArgumentError("residual CSV has no data rows");
  }
  std::vector<ResidualPanel> panels;
  for (auto& [key, values] : groups) {
    ResidualPanel p;
    p.label = sweep_col >= 0 ? absl::StrCat("sweep ", key.first,
                                            ", coordinate ", key.second)
                             : absl::StrCat("coordinate ", key.second);
    p.values = std::move(values);
    panels.push_back(std::move(p));
  }
  return panels;
}

absl::StatusOr<std::string> RenderHistogramSvg(
    const std::vector<ResidualPanel>& panels, const SvgOptions& options) {
  if (panels.empty()) return absl::InvalidArgumentError("nothing to plot");
  if (options.panel_width < 100 || options.panel_height < 80 ||
      options.columns < 1) {
    return absl::InvalidArgumentError("panel size or column count too small");
  }
  const int columns =
      std::min<int>(options.columns, static_cast<int>(panels.size()));
  const int rows = (static_cast<int>(panels.size()) + columns - 1) / columns;
  const int width = columns * options.panel_width;
  const int height = rows * options.panel_height;

  std::string svg = absl::StrFormat(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
      "width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\" "
      "font-family=\"DejaVu Sans Mono, monospace\" font-size=\"11\">\n"
      "<rect x=\"0\" y=\"0\" width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n",
      width, height, width, height, width, height);
  for (size_t p = 0; p < panels.size(); ++p) {
    absl::StatusOr<Histogram> h = BuildHistogram(panels[p].values, options.bins);
    if (!h.ok()) return h.status();
    const int64_t peak = *std::max_element(h->counts.begin(), h->counts.end());
    const double ox = static_cast<double>(p % columns) * options.panel_width;
    const double oy = static_cast<double>(p / columns) * options.panel_height;
    const double plot_w = options.panel_width - 2 * kMargin;
    const double plot_h = options.panel_height - 2 * kMargin;
    const double bar_w = plot_w / static_cast<double>(h->counts.size());
    absl::StrAppendFormat(
        &svg,
        "<g id=\"panel-%d\" class=\"histogram\" "
        "transform=\"translate(%.3f,%.3f)\">\n"
        "<text x=\"%.3f\" y=\"16\" text-anchor=\"middle\">%s (n=%d)</text>\n"
        "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" "
        "fill=\"none\" stroke=\"#444444\"/>\n",
        p, ox, oy, options.panel_width / 2.0, panels[p].label,
        h->Total(), kMargin, kMargin, plot_w, plot_h);
    for (size_t k = 0; k < h->counts.size(); ++k) {
      if (h->counts[k] == 0) continue;
      const double bar_h = plot_h * static_cast<double>(h->counts[k]) /
                           static_cast<double>(peak);
      absl::StrAppendFormat(
          &svg,
          "<rect id=\"panel-%d-bin-%d\" x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" "
          "height=\"%.3f\" fill=\"#4c72b0\"/>\n",
          p, k, kMargin + bar_w * k, kMargin + plot_h - bar_h, bar_w, bar_h);
    }
    absl::StrAppendFormat(
        &svg,
        "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"start\">%.4g</text>\n"
        "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"end\">%.4g</text>\n"
        "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"end\">%d</text>\n"
        "</g>\n",
        kMargin, kMargin + plot_h + 14, h->lo, kMargin + plot_w,
        kMargin + plot_h + 14, h->hi, kMargin - 3, kMargin + 9, peak);
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dppost
