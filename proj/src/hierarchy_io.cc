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

#include "dppost/hierarchy_io.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "json.hpp"

namespace dppost {

namespace {

using ::nlohmann::ordered_json;

absl::Status CollectJson(const ordered_json& node, const std::string& parent,
                         std::vector<HierarchyRecord>& out) {
  if (!node.is_object()) {
    return absl::InvalidArgumentError("hierarchy JSON node must be an object");
  }
  if (!node.contains("id") || !node["id"].is_string()) {
    return absl::InvalidArgumentError("hierarchy JSON node needs a string id");
  }
  if (!node.contains("count") || !node["count"].is_number()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "node '", node["id"].get<std::string>(), "' needs a numeric count"));
  }
  const std::string id = node["id"].get<std::string>();
  out.push_back({id, parent, node["count"].get<double>()});
  if (node.contains("children")) {
    const ordered_json& children = node["children"];
    if (!children.is_array()) {
      return absl::InvalidArgumentError(
          absl::StrCat("children of '", id, "' must be an array"));
    }
    for (const ordered_json& child : children) {
      if (absl::Status s = CollectJson(child, id, out); !s.ok()) return s;
    }
  }
  return absl::OkStatus();
}

ordered_json ToJson(const Hierarchy& h, int index) {
  const HierarchyNode& node = h.nodes()[index];
  ordered_json out;
  out["id"] = node.id;
  out["count"] = node.count;
  ordered_json children = ordered_json::array();
  for (int c : node.children) children.push_back(ToJson(h, c));
  out["children"] = std::move(children);
  return out;
}

}  // namespace

std::string FormatDouble(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

absl::StatusOr<double> ParseDouble(absl::string_view text) {
  text = absl::StripAsciiWhitespace(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(),
                                   value);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat("not a number: '", text, "'"));
  }
  return value;
}

absl::StatusOr<Hierarchy> ParseHierarchyCsv(absl::string_view text) {
  std::vector<absl::string_view> lines = absl::StrSplit(text, '\n');
  std::vector<HierarchyRecord> records;
  bool header_seen = false;
  for (size_t i = 0; i < lines.size(); ++i) {
    absl::string_view line = absl::StripAsciiWhitespace(lines[i]);
    if (line.empty()) continue;
    std::vector<absl::string_view> fields = absl::StrSplit(line, ',');
    if (fields.size() != 3) {
      return absl::InvalidArgumentError(absl::StrCat(
          "line ", i + 1, ": expected 3 fields, got ", fields.size()));
    }
    for (absl::string_view& f : fields) f = absl::StripAsciiWhitespace(f);
    if (!header_seen) {
      if (fields[0] != "id" || fields[1] != "parent_id" ||
          fields[2] != "count") {
        return absl::InvalidArgumentError(
            "hierarchy CSV must start with header 'id,parent_id,count'");
      }
      header_seen = true;
      continue;
    }
    absl::StatusOr<double> count = ParseDouble(fields[2]);
    if (!count.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", i + 1, ": ", count.status().message()));
    }
    records.push_back(
        {std::string(fields[0]), std::string(fields[1]), *count});
  }
  return Hierarchy::Create(records);
}

std::string FormatHierarchyCsv(const Hierarchy& h) {
  std::string out = "id,parent_id,count\n";
  for (const HierarchyRecord& r : h.Records()) {
    absl::StrAppend(&out, r.id, ",", r.parent_id, ",", FormatDouble(r.count),
                    "\n");
  }
  return out;
}

absl::StatusOr<Hierarchy> ParseHierarchyJson(absl::string_view text) {
  ordered_json root = ordered_json::parse(text, nullptr, false);
  if (root.is_discarded()) {
    return absl::InvalidArgumentError("malformed hierarchy JSON");
  }
  std::vector<HierarchyRecord> records;
  if (absl::Status s = CollectJson(root, "", records); !s.ok()) return s;
  return Hierarchy::Create(records);
}

std::string FormatHierarchyJson(const Hierarchy& h) {
  return ToJson(h, 0).dump(2) + "\n";
}

absl::StatusOr<Hierarchy> ReadHierarchyFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  absl::string_view trimmed = absl::StripLeadingAsciiWhitespace(text);
  if (!trimmed.empty() && trimmed.front() == '{') {
    return ParseHierarchyJson(text);
  }
  return ParseHierarchyCsv(text);
}

}  // namespace dppost
