// Copyright 2026 The DistillScope Authors.
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

#include "io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace ds {

namespace {

constexpr char kMagic[4] = {'K', 'D', 'V', 'C'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void fail(CheckpointFailure f, const std::string& what) { throw CheckpointError(f, "checkpoint: " + what); }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const ParameterSet<float>& params,
                                            const CheckpointMeta& meta) {
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    manifest.push_back({{"name", e.name},
                        {"shape", e.value.shape()},
                        {"dtype", "f32"},
                        {"offset", offset},
                        {"trainable", e.trainable}});
    offset += static_cast<std::uint64_t>(e.value.numel()) * 4;
  }
  const nlohmann::json header{{"model", model.config_json()}, {"epoch", meta.epoch},     {"seed", meta.seed},
                              {"metrics", meta.metrics},      {"data_bytes", offset}, {"parameters", manifest}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + text.size() + offset);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : params.entries())
    for (float v : e.value.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) fail(CheckpointFailure::kBadMagic, "bad magic");
  if (bytes.size() < kPreamble) fail(CheckpointFailure::kTruncated, "truncated preamble");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion)
    fail(CheckpointFailure::kVersionMismatch,
         "version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_len > bytes.size() - kPreamble) fail(CheckpointFailure::kTruncated, "truncated header");

  nlohmann::json header;
  std::unique_ptr<Model> model;
  std::uint64_t data_bytes = 0;
  CheckpointMeta meta;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
    data_bytes = header.at("data_bytes").get<std::uint64_t>();
    meta.epoch = header.at("epoch").get<int>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.metrics = header.at("metrics");
    model = model_from_json(header.at("model"));
  } catch (const nlohmann::json::exception& e) {
    fail(CheckpointFailure::kMalformedHeader, std::string("malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    fail(CheckpointFailure::kMalformedHeader, std::string("bad model config: ") + e.what());
  }
  const std::uint64_t data_start = kPreamble + header_len;
  if (bytes.size() - data_start < data_bytes) fail(CheckpointFailure::kTruncated, "truncated parameter data");
  if (bytes.size() - data_start > data_bytes)
    fail(CheckpointFailure::kTruncated, "file is longer than its declared length");

  auto params = model->init(0);
  const auto& manifest = header["parameters"];
  if (!manifest.is_array() || manifest.size() != params.size())
    fail(CheckpointFailure::kManifestMismatch, "manifest does not list the model's parameters");
  std::uint64_t expected_offset = 0;
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const auto& m = manifest[i];
    try {
      if (m.at("name").get<std::string>() != e.name)
        fail(CheckpointFailure::kManifestMismatch,
             "parameter " + std::to_string(i) + " is '" + m.at("name").get<std::string>() + "', expected '" + e.name + "'");
      if (m.at("shape").get<Shape>() != e.value.shape())
        fail(CheckpointFailure::kManifestMismatch, "shape of '" + e.name + "' disagrees with the model");
      if (m.at("dtype").get<std::string>() != "f32")
        fail(CheckpointFailure::kManifestMismatch, "dtype of '" + e.name + "' is not f32");
      if (m.at("offset").get<std::uint64_t>() != expected_offset)
        fail(CheckpointFailure::kManifestMismatch, "offset of '" + e.name + "' is not contiguous");
      e.trainable = m.at("trainable").get<bool>();
    } catch (const nlohmann::json::exception& ex) {
      fail(CheckpointFailure::kMalformedHeader, "manifest entry " + std::to_string(i) + ": " + ex.what());
    }
    const std::uint64_t n = static_cast<std::uint64_t>(e.value.numel());
    if (expected_offset + 4 * n > data_bytes) fail(CheckpointFailure::kTruncated, "blob of '" + e.name + "' overruns the data");
    auto dst = e.value.mutable_data();
    const std::uint8_t* src = bytes.data() + data_start + expected_offset;
    for (std::size_t j = 0; j < n; ++j) dst[j] = std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * j));
    expected_offset += 4 * n;
  }
  if (expected_offset != data_bytes) fail(CheckpointFailure::kManifestMismatch, "declared data length disagrees with the manifest");
  return {std::move(model), std::move(params), std::move(meta)};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const ParameterSet<float>& params,
                     const CheckpointMeta& meta) {
  write_file(path, encode_checkpoint(model, params, meta));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace ds
