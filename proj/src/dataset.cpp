// Copyright 2026 The maskdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "maskdiff/dataset.hpp"

#include <fstream>
#include <sstream>

namespace maskdiff {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const ConversationExample& ex) {
  ordered_json j;
  if (ex.image) {
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < ex.image->height; ++r) {
      ordered_json row = ordered_json::array();
      for (int c = 0; c < ex.image->width; ++c) row.push_back(ex.image->at(r, c));
      rows.push_back(std::move(row));
    }
    j["image"] = {{"grid", std::move(rows)}};
  } else {
    j["image"] = nullptr;
  }
  ordered_json turns = ordered_json::array();
  for (const Turn& t : ex.turns) {
    turns.push_back({{"prompt", t.prompt}, {"response", t.response}});
  }
  j["turns"] = std::move(turns);
  j["class"] = std::string(to_string(ex.cls));
  return j;
}

namespace {

std::vector<Token> read_tokens(const json& arr, const Vocabulary& vocab,
                               bool content_only) {
  if (!arr.is_array()) throw ValidationError("token list must be an array");
  std::vector<Token> out;
  out.reserve(arr.size());
  for (const json& v : arr) {
    const auto tok = v.get<long long>();
    const bool ok = content_only ? vocab.is_content(static_cast<Token>(tok))
                                 : vocab.is_valid(static_cast<Token>(tok));
    if (tok < 0 || tok > INT32_MAX || !ok) {
      throw ValidationError("token id out of range: " + std::to_string(tok));
    }
    out.push_back(static_cast<Token>(tok));
  }
  return out;
}

Tag infer_tag(const ConversationExample& ex, const Vocabulary& vocab) {
  if (!vocab.has_tag_tokens() || ex.turns.empty()) return Tag::kNone;
  auto all_end_with = [&](Token tok) {
    for (const Turn& t : ex.turns) {
      if (t.prompt.empty() || t.prompt.back() != tok) return false;
    }
    return true;
  };
  if (all_end_with(vocab.no_think())) return Tag::kNoThink;
  if (all_end_with(vocab.think())) return Tag::kThink;
  return Tag::kNone;
}

}  // namespace

ConversationExample example_from_json(const json& j, const Vocabulary& vocab) {
  ConversationExample ex;
  if (j.contains("image") && !j["image"].is_null()) {
    const json& rows = j["image"].at("grid");
    const int h = static_cast<int>(rows.size());
    const int w = h > 0 ? static_cast<int>(rows[0].size()) : 0;
    std::vector<int> cells;
    for (const json& row : rows) {
      if (static_cast<int>(row.size()) != w) {
        throw ValidationError("ragged image grid");
      }
      for (const json& c : row) cells.push_back(c.get<int>());
    }
    ex.image = Grid(h, w, std::move(cells));
  }
  for (const json& t : j.at("turns")) {
    ex.turns.push_back({read_tokens(t.at("prompt"), vocab, false),
                        read_tokens(t.at("response"), vocab, true)});
  }
  ex.cls = parse_corpus_class(j.at("class").get<std::string>());
  ex.tag = infer_tag(ex, vocab);
  return ex;
}

void write_jsonl(std::ostream& out,
                 const std::vector<ConversationExample>& corpus) {
  for (const ConversationExample& ex : corpus) out << to_json(ex).dump() << '\n';
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<ConversationExample>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  write_jsonl(out, corpus);
}

std::vector<ConversationExample> read_jsonl(std::istream& in,
                                            const Vocabulary& vocab) {
  std::vector<ConversationExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(example_from_json(json::parse(line), vocab));
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ConversationExample> read_jsonl(const std::filesystem::path& path,
                                            const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus: " + path.string());
  return read_jsonl(in, vocab);
}

}  // namespace maskdiff
