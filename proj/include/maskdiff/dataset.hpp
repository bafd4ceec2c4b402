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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskdiff/conversation.hpp"

namespace maskdiff {

// JSONL corpus, one example per line:
//   {"image": {"grid": [[int,...],...]} | null,
//    "turns": [{"prompt": [int,...], "response": [int,...]}, ...],
//    "class": "DIRECT" | "REASONING"}
// Tags are not stored separately; they are the trailing reserved token of
// every prompt and are recovered on read.

nlohmann::ordered_json to_json(const ConversationExample& ex);
ConversationExample example_from_json(const nlohmann::json& j,
                                      const Vocabulary& vocab);

void write_jsonl(std::ostream& out, const std::vector<ConversationExample>& corpus);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<ConversationExample>& corpus);

std::vector<ConversationExample> read_jsonl(std::istream& in,
                                            const Vocabulary& vocab);
std::vector<ConversationExample> read_jsonl(const std::filesystem::path& path,
                                            const Vocabulary& vocab);

}  // namespace maskdiff
