// Copyright 2026 The counselkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace counselkit::io {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// One JSON value per line, compact, keys sorted, trailing newline after each record.
std::string to_jsonl(const std::vector<Json>& records);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
void write_json(const std::filesystem::path& path, const Json& doc);

struct JsonlLine {
  std::size_t line_number = 0;  // 1-based
  Json value;
};

struct JsonlSkip {
  std::size_t line_number = 0;
  std::string reason;
};

struct JsonlContents {
  std::vector<JsonlLine> lines;
  std::vector<JsonlSkip> skipped;
};

// Blank lines are ignored; undecodable lines are reported, not thrown.
JsonlContents parse_jsonl(std::string_view text);

// Strict variant: any malformed line is an error naming the file and line.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);

}  // namespace counselkit::io
