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

#ifndef DPPOST_HIERARCHY_IO_H_
#define DPPOST_HIERARCHY_IO_H_

#include <string>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dppost/constraints.h"

namespace dppost {

// CSV form: header `id,parent_id,count`, one node per row, empty parent_id
// for the root. Rows are written breadth-first; counts use the shortest
// decimal that round-trips.
absl::StatusOr<Hierarchy> ParseHierarchyCsv(absl::string_view text);
std::string FormatHierarchyCsv(const Hierarchy& h);

// Nested JSON form: {"id": ..., "count": ..., "children": [...]}.
absl::StatusOr<Hierarchy> ParseHierarchyJson(absl::string_view text);
std::string FormatHierarchyJson(const Hierarchy& h);

// Picks the format from the content: JSON if the first non-blank character
// is '{', CSV otherwise.
absl::StatusOr<Hierarchy> ReadHierarchyFile(const std::string& path);

// Shortest round-trip decimal representation of a double.
std::string FormatDouble(double value);

// Strict decimal parse; trims surrounding whitespace.
absl::StatusOr<double> ParseDouble(absl::string_view text);

}  // namespace dppost

#endif  // DPPOST_HIERARCHY_IO_H_
