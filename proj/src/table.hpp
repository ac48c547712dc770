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

#include <string>
#include <vector>

namespace counselkit {

// Plain-text table with booktabs-style rules. Widths count UTF-8 code points.
class TextTable {
 public:
  enum class Align { kLeft, kRight };

  explicit TextTable(std::vector<std::string> header);

  // Columns after which a vertical bar is drawn (0-based).
  void set_group_breaks(std::vector<std::size_t> after_columns) { breaks_ = std::move(after_columns); }
  void set_align(std::size_t column, Align a);
  // Optional super-header spanning column groups, e.g. mechanism names over F1/Acc pairs.
  void set_super_header(std::vector<std::pair<std::string, std::size_t>> spans) { super_ = std::move(spans); }

  void add_row(std::vector<std::string> cells);
  void add_rule();

  std::string render() const;

 private:
  struct Row {
    bool rule = false;
    std::vector<std::string> cells;
  };
  std::vector<std::string> header_;
  std::vector<Align> align_;
  std::vector<std::size_t> breaks_;
  std::vector<std::pair<std::string, std::size_t>> super_;
  std::vector<Row> rows_;
};

std::size_t display_width(const std::string& s);

}  // namespace counselkit
