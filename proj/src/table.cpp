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

#include "table.hpp"

#include <algorithm>
#include <numeric>

namespace counselkit {

std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

TextTable::TextTable(std::vector<std::string> header)
    : header_(std::move(header)), align_(header_.size(), Align::kRight) {
  if (!align_.empty()) align_[0] = Align::kLeft;
}

void TextTable::set_align(std::size_t column, Align a) {
  if (column < align_.size()) align_[column] = a;
}

void TextTable::add_row(std::vector<std::string> cells) {
  cells.resize(header_.size());
  rows_.push_back({false, std::move(cells)});
}

void TextTable::add_rule() { rows_.push_back({true, {}}); }

std::string TextTable::render() const {
  const std::size_t n = header_.size();
  std::vector<std::size_t> width(n);
  for (std::size_t c = 0; c < n; ++c) width[c] = display_width(header_[c]);
  for (const auto& r : rows_) {
    if (r.rule) continue;
    for (std::size_t c = 0; c < n; ++c) width[c] = std::max(width[c], display_width(r.cells[c]));
  }

  auto is_break = [&](std::size_t c) { return std::find(breaks_.begin(), breaks_.end(), c) != breaks_.end(); };
  auto separator = [&](std::size_t c) -> std::string {
    if (c + 1 == n) return "";
    return is_break(c) ? " | " : "  ";
  };

  // Widen the spanned columns when a super-header label is longer than its span.
  if (!super_.empty()) {
    std::size_t col = 0;
    for (const auto& [label, span] : super_) {
      if (span == 0 || col + span > n) break;
      std::size_t have = 0;
      for (std::size_t c = col; c < col + span; ++c) {
        have += width[c];
        if (c + 1 < col + span) have += separator(c).size();
      }
      auto need = display_width(label);
      if (need > have) width[col + span - 1] += need - have;
      col += span;
    }
  }

  auto pad = [](const std::string& s, std::size_t w, Align a) {
    auto fill = std::string(w - std::min(w, display_width(s)), ' ');
    return a == Align::kLeft ? s + fill : fill + s;
  };
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < n; ++c) out += pad(cells[c], width[c], align_[c]) + separator(c);
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::size_t total = 0;
  for (std::size_t c = 0; c < n; ++c) total += width[c] + separator(c).size();
  const std::string heavy(total, '=');
  const std::string light(total, '-');

  std::string out = heavy + "\n";
  if (!super_.empty()) {
    std::string s;
    std::size_t col = 0;
    for (const auto& [label, span] : super_) {
      std::size_t w = 0;
      for (std::size_t c = col; c < col + span && c < n; ++c) w += width[c] + separator(c).size();
      std::string cell = label;
      // centre over the span, keeping the trailing separator in place
      std::size_t sep = (col + span - 1 < n) ? separator(col + span - 1).size() : 0;
      std::size_t inner = w - sep;
      std::size_t left = (inner - std::min(inner, display_width(cell))) / 2;
      cell = std::string(left, ' ') + cell;
      s += pad(cell, inner, Align::kLeft) + ((col + span - 1 < n) ? separator(col + span - 1) : "");
      col += span;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out += s + "\n";
  }
  out += line(header_);
  out += light + "\n";
  for (const auto& r : rows_) out += r.rule ? light + "\n" : line(r.cells);
  out += heavy + "\n";
  return out;
}

}  // namespace counselkit
