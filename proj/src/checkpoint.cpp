// Copyright 2026 The CPT Authors.
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

#include "cpt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cpt/util/rng.hpp"

namespace cpt {
namespace {

constexpr char kMagic[8] = {'C', 'P', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put_le(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + at, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

const Parameter& Checkpoint::at(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw CheckpointError("checkpoint has no parameter '" + name + "'");
}

std::string serialize_checkpoint(const nlohmann::json& meta, std::span<const Parameter> params) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["meta"] = meta;
  header["params"] = nlohmann::json::array();
  for (const auto& p : params)
    header["params"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"trainable", p.trainable()}});
  std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : params) {
    const Mat& v = p.tensor.value();
    for (Index i = 0; i < v.size(); ++i) put_le<double>(out, v.data()[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (16 + header_len > bytes.size()) throw CheckpointError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointFormatVersion)
    throw CheckpointError("unsupported checkpoint format version");

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  std::size_t at = 16 + header_len;
  for (const auto& entry : header.at("params")) {
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> values(static_cast<std::size_t>(ad::numel(shape)));
    for (auto& v : values) {
      v = get_le<double>(bytes, at);
      at += sizeof(double);
    }
    ckpt.params.push_back(
        {entry.at("name").get<std::string>(), Tensor::from_values(shape, values, entry.at("trainable").get<bool>())});
  }
  if (at != bytes.size()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     std::span<const Parameter> params) {
  std::string bytes = serialize_checkpoint(meta, params);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

std::uint64_t parameter_hash(std::span<const Parameter> params) {
  std::uint64_t h = fnv1a(std::string_view{});
  for (const auto& p : params) {
    h = fnv1a(p.name, h);
    h = fnv1a(ad::to_string(p.tensor.shape()), h);
    h = fnv1a(p.trainable() ? "T" : "F", h);
    const Mat& v = p.tensor.value();
    h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()),
                                             static_cast<std::size_t>(v.size()) * sizeof(double)),
              h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace cpt
