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

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "json.hpp"
#include "nn/models.hpp"

namespace ds {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  ParameterSet<float> params;
  CheckpointMeta meta;
};

/// Layout: "KDVC", u32 version, u64 header length, JSON header, then the
/// parameters as little-endian f32 blobs in manifest order. The header holds
/// {model, epoch, seed, metrics, data_bytes, parameters: [{name, shape, dtype,
/// offset, trainable}]} with offsets relative to the end of the header.
std::vector<std::uint8_t> encode_checkpoint(const Model& model, const ParameterSet<float>& params,
                                            const CheckpointMeta& meta);
/// Throws CheckpointError naming the failure; nothing is returned on error.
LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const ParameterSet<float>& params,
                     const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ds
