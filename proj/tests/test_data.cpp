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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "maskdiff/checkpoint.hpp"
#include "maskdiff/dataset.hpp"
#include "maskdiff/task.hpp"

using namespace maskdiff;

namespace {

std::string jsonl_bytes(const std::vector<ConversationExample>& corpus) {
  std::ostringstream out;
  write_jsonl(out, corpus);
  return out.str();
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("maskdiff_test_" + name);
}

}  // namespace

TEST_SUITE("random") {

TEST_CASE("streams are reproducible and distinct") {
  Rng a = Rng::stream(5, "corpus", 1);
  Rng b = Rng::stream(5, "corpus", 1);
  Rng c = Rng::stream(5, "corpus", 2);
  Rng d = Rng::stream(5, "init", 1);
  Rng e = Rng::stream(6, "corpus", 1);
  const auto x = a.engine()();
  CHECK(x == b.engine()());
  CHECK(x != c.engine()());
  CHECK(x != d.engine()());
  CHECK(x != e.engine()());
}

TEST_CASE("uniform and index ranges") {
  Rng r(1);
  double mean = 0.0;
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    mean += u;
    counts[r.index(5)]++;
  }
  CHECK(mean / 50000 == doctest::Approx(0.5).epsilon(0.01));
  for (int c : counts) CHECK(std::abs(c / 50000.0 - 0.2) < 0.01);
}

TEST_CASE("stable hash") {
  CHECK(stable_hash("") == 14695981039346656037ull);
  CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cull);
}

}

TEST_SUITE("task") {

TEST_CASE("vocabulary layout") {
  const GridCaptionTask task(TaskSpec{});
  CHECK(task.content_vocab() == 16);
  CHECK(task.numeral(0) == 0);
  CHECK(task.color(0) == 5);
  CHECK(task.shape(0) == 9);
  CHECK(task.q_caption() == 13);
  CHECK(task.q_count() == 15);
  std::set<Token> all;
  for (int n = 0; n <= 4; ++n) all.insert(task.numeral(n));
  for (int c = 0; c < 4; ++c) all.insert(task.color(c));
  for (int s = 0; s < 4; ++s) all.insert(task.shape(s));
  all.insert({task.q_caption(), task.q_color(), task.q_count()});
  CHECK(all.size() == 16);
  CHECK(*all.rbegin() == 15);
  CHECK_THROWS_AS(task.numeral(5), ArgumentError);
}

TEST_CASE("1x1 captions cover exactly shapes times colors sequences") {
  TaskSpec spec;
  spec.height = spec.width = 1;
  spec.n_shapes = 4;
  spec.n_colors = 4;
  const GridCaptionTask task(spec);
  std::set<std::vector<Token>> grammar;
  for (int id = 0; id < task.cell_ids(); ++id) grammar.insert(task.caption(Grid(1, 1, {id})));
  CHECK(grammar.size() == 16);
  std::set<std::vector<Token>> seen;
  for (const auto& ex : make_corpus(spec, 2000, 3)) {
    REQUIRE(ex.turns.size() == 1);
    CHECK(grammar.contains(ex.turns[0].response));
    seen.insert(ex.turns[0].response);
  }
  CHECK(seen == grammar);
}

TEST_CASE("caption content") {
  const GridCaptionTask task(TaskSpec{});
  const Grid g(2, 2, {0, 5, 10, 15});
  const std::vector<Token> cap = task.caption(g);
  CHECK(cap == std::vector<Token>{5, 9, 6, 10, 7, 11, 8, 12});
}

TEST_CASE("question answers are correct") {
  TaskSpec spec;
  spec.family = TaskFamily::kDialogue;
  const GridCaptionTask task(spec);
  int counts = 0;
  for (const auto& ex : make_corpus(spec, 300, 4)) {
    REQUIRE(ex.turns.size() == 2);
    REQUIRE(ex.image);
    CHECK(ex.turns[0].response == task.caption(*ex.image));
    const Turn& q = ex.turns[1];
    if (q.prompt[0] == task.q_count()) {
      ++counts;
      const int c = q.prompt[1] - task.color(0);
      int n = 0;
      for (int id : ex.image->cells) n += task.color_of(id) == c;
      CHECK(q.response == std::vector<Token>{task.numeral(n)});
      CHECK(ex.cls == CorpusClass::kReasoning);
    } else {
      CHECK(q.prompt[0] == task.q_color());
      const int cell = ex.image->cells[static_cast<std::size_t>(q.prompt[1])];
      CHECK(q.response == std::vector<Token>{task.color(task.color_of(cell))});
      CHECK(ex.cls == CorpusClass::kDirect);
    }
  }
  CHECK(counts > 100);
  CHECK(counts < 200);
}

TEST_CASE("corpus determinism and empty corpus") {
  TaskSpec spec;
  spec.family = TaskFamily::kDialogue;
  CHECK(jsonl_bytes(make_corpus(spec, 50, 9)) == jsonl_bytes(make_corpus(spec, 50, 9)));
  CHECK(jsonl_bytes(make_corpus(spec, 50, 9)) != jsonl_bytes(make_corpus(spec, 50, 10)));
  CHECK(make_corpus(spec, 0, 9).empty());
  const auto path = temp_path("empty.jsonl");
  write_jsonl(path, {});
  CHECK(std::filesystem::file_size(path) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("split hygiene") {
  const CorpusSplit s = make_split(TaskSpec{}, 5000, 500, 1);
  CHECK(s.train.size() == 5000);
  CHECK(s.eval.size() == 500);
  std::set<Grid> eval_grids;
  for (const auto& ex : s.eval) eval_grids.insert(*ex.image);
  CHECK(eval_grids.size() == 500);
  for (const auto& ex : s.train) CHECK_FALSE(eval_grids.contains(*ex.image));

  TaskSpec tiny;
  tiny.height = tiny.width = 1;
  tiny.n_shapes = tiny.n_colors = 2;
  CHECK_THROWS_AS(make_split(tiny, 10, 4, 1), ValidationError);
}

TEST_CASE("degenerate specs") {
  TaskSpec spec;
  spec.n_shapes = 0;
  CHECK_THROWS_AS(make_corpus(spec, 5, 1), ValidationError);
  spec = TaskSpec{};
  spec.n_colors = 0;
  CHECK_THROWS_AS(GridCaptionTask{spec}, ValidationError);
  spec = TaskSpec{};
  spec.height = 0;
  CHECK_THROWS_AS(GridCaptionTask{spec}, ValidationError);
  CHECK_THROWS(parse_task_family("poetry"));
  for (auto f : {TaskFamily::kCaption, TaskFamily::kColorQa, TaskFamily::kCountQa,
                 TaskFamily::kDialogue}) {
    CHECK(parse_task_family(to_string(f)) == f);
  }
}

TEST_CASE("task spec json round trip") {
  TaskSpec spec;
  spec.height = 3;
  spec.family = TaskFamily::kCountQa;
  spec.count_fraction = 0.25;
  const TaskSpec back = TaskSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
  CHECK(back.height == 3);
  CHECK(back.family == TaskFamily::kCountQa);
  CHECK(back.count_fraction == 0.25);
}

}

TEST_SUITE("dataset") {

TEST_CASE("jsonl round trip") {
  TaskSpec spec;
  spec.family = TaskFamily::kDialogue;
  const GridCaptionTask task(spec);
  Rng rng(2);
  auto corpus = apply_tag_policy(make_corpus(spec, 40, 2), task.vocab(), rng);
  ConversationExample text_only;
  text_only.turns.push_back({{1, 2}, {3}});
  corpus.push_back(text_only);
  const std::string bytes = jsonl_bytes(corpus);
  std::istringstream in(bytes);
  const auto back = read_jsonl(in, task.vocab());
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].image == corpus[i].image);
    CHECK(back[i].tag == corpus[i].tag);
    CHECK(back[i].cls == corpus[i].cls);
    REQUIRE(back[i].turns.size() == corpus[i].turns.size());
    for (std::size_t t = 0; t < corpus[i].turns.size(); ++t) {
      CHECK(back[i].turns[t].prompt == corpus[i].turns[t].prompt);
      CHECK(back[i].turns[t].response == corpus[i].turns[t].response);
    }
  }
  CHECK(jsonl_bytes(back) == bytes);
}

TEST_CASE("malformed corpora are rejected") {
  const Vocabulary vocab(4);
  auto read = [&](const std::string& text) {
    std::istringstream in(text);
    return read_jsonl(in, vocab);
  };
  CHECK_THROWS_AS(read("{not json}\n"), ValidationError);
  CHECK_THROWS_AS(read(R"({"image":null,"turns":[{"prompt":[9],"response":[1]}],"class":"DIRECT"})" "\n"),
                  ValidationError);
  CHECK_THROWS_AS(read(R"({"image":{"grid":[[1,2],[3]]},)"
                       R"("turns":[{"prompt":[0],"response":[1]}],"class":"DIRECT"})" "\n"),
                  ValidationError);
  CHECK(read("\n").empty());
  CHECK_THROWS_AS(read_jsonl(temp_path("missing.jsonl"), vocab), ConfigError);
}

}

TEST_SUITE("checkpoint") {

TEST_CASE("model checkpoint round trip is exact") {
  ModelConfig mc;
  mc.d_model = 16;
  mc.blocks = 1;
  mc.ffn_hidden = 24;
  mc.projector_hidden = 8;
  const TinyTransformer model(mc, 4);
  const auto path = temp_path("model.ckpt");
  save_model(path, model, {{"note", "x"}});
  const TinyTransformer back = load_model(path);
  CHECK(back.params() == model.params());
  CHECK(back.params().checksum() == model.params().checksum());
  CHECK(back.config().to_json() == model.config().to_json());
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.metadata["note"] == "x");

  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto manifest = nlohmann::json::parse(bytes.substr(0, bytes.find('\n')));
  CHECK(manifest["format"] == kCheckpointFormat);
  std::size_t payload = 0;
  for (const auto& t : manifest["tensors"]) {
    CHECK(t["dtype"] == "float64");
    CHECK(t["offset"].get<std::size_t>() == payload);
    payload += t["bytes"].get<std::size_t>();
  }
  CHECK(bytes.size() == bytes.find('\n') + 1 + payload);
  CHECK(serialize_checkpoint(model.params(), {{"note", "x"}, {"model", model.config().to_json()}}) ==
        bytes);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  ParameterStore ps;
  ps.add("w", ParamGroup::kLanguage, Eigen::MatrixXd::Constant(2, 3, 1.5));
  const std::string bytes = serialize_checkpoint(ps, nlohmann::ordered_json::object());
  CHECK(deserialize_checkpoint(bytes).params == ps);
  CHECK_THROWS_AS(deserialize_checkpoint("no newline"), ValidationError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), ValidationError);
  CHECK_THROWS_AS(deserialize_checkpoint("{\"format\":\"other\"}\n"), ValidationError);
}

}
