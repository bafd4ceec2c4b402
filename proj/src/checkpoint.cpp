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

#include "maskdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace maskdiff {

using nlohmann::json;
using nlohmann::ordered_json;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffU));
    bits >>= 8;
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const ParameterStore& params, const ordered_json& metadata) {
  ordered_json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["metadata"] = metadata;
  ordered_json tensors = ordered_json::array();
  std::string payload;
  for (const Parameter& p : params) {
    const RowMajor values = p.value;
    const std::size_t offset = payload.size();
    for (Eigen::Index i = 0; i < values.size(); ++i) append_le(payload, values.data()[i]);
    tensors.push_back({{"name", p.name},
                       {"group", std::string(to_string(p.group))},
                       {"dtype", "float64"},
                       {"shape", {values.rows(), values.cols()}},
                       {"order", "row-major"},
                       {"offset", offset},
                       {"bytes", payload.size() - offset}});
  }
  manifest["tensors"] = std::move(tensors);
  std::string out = manifest.dump();
  out.push_back('\n');
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string::npos) throw ValidationError("checkpoint has no manifest line");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw ValidationError("unsupported checkpoint format");
  }
  const char* payload = bytes.data() + newline + 1;
  const std::size_t payload_size = bytes.size() - newline - 1;

  Checkpoint out;
  out.metadata = manifest.value("metadata", json::object());
  for (const json& t : manifest.at("tensors")) {
    if (t.at("dtype") != "float64" || t.value("order", "row-major") != "row-major") {
      throw ValidationError("unsupported tensor encoding");
    }
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = static_cast<std::size_t>(rows * cols);
    if (rows < 0 || cols < 0 || offset > payload_size || count * 8 > payload_size - offset) {
      throw ValidationError("tensor " + t.at("name").get<std::string>() + " exceeds payload");
    }
    RowMajor values(rows, cols);
    for (std::size_t i = 0; i < count; ++i) values.data()[i] = read_le(payload + offset + 8 * i);
    out.params.add(t.at("name").get<std::string>(),
                   parse_param_group(t.at("group").get<std::string>()), values);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const ordered_json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  const std::string bytes = serialize_checkpoint(params, metadata);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void save_model(const std::filesystem::path& path, const TinyTransformer& model,
                ordered_json extra) {
  extra["model"] = model.config().to_json();
  save_checkpoint(path, model.params(), extra);
}

TinyTransformer load_model(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.metadata.contains("model")) throw ValidationError("checkpoint lacks model config");
  return TinyTransformer(ModelConfig::from_json(ck.metadata["model"]), std::move(ck.params));
}

}  // namespace maskdiff
