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

#include "data/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "core/error.hpp"
#include "json.hpp"

namespace ds {

Image to_float(const ImageU8& image) {
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.pixels[i] = static_cast<float>(image.pixels[i]) / 255.f;
  return out;
}

ImageU8 to_u8(const Image& image) {
  ImageU8 out{image.height, image.width, std::vector<std::uint8_t>(image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.f, 1.f) * 255.f;
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses the next whitespace-separated header token, skipping # comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  return tok;
}

int parse_positive(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw IoError("undecodable PPM header in " + path.string());
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw IoError("not a binary P6 PPM: " + path.string());
  const int width = parse_positive(next_token(bytes, pos), path);
  const int height = parse_positive(next_token(bytes, pos), path);
  if (parse_positive(next_token(bytes, pos), path) != 255) throw IoError("PPM maxval must be 255: " + path.string());
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() < pos + n) throw IoError("truncated PPM raster in " + path.string());
  ImageU8 img{height, width, std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + n))};
  return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageU8& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const ImageU8& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Image read_raw_tensor(const std::filesystem::path& path) {
  auto sidecar_path = path;
  sidecar_path += ".json";
  nlohmann::json meta;
  try {
    std::ifstream in(sidecar_path);
    if (!in) throw IoError("missing raw-tensor sidecar " + sidecar_path.string());
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad raw-tensor sidecar " + sidecar_path.string() + ": " + e.what());
  }
  if (meta.value("dtype", "") != "f32" || meta.value("order", "") != "row-major")
    throw IoError("raw tensor " + path.string() + " must be dtype f32, row-major");
  const auto shape = meta.at("shape").get<std::vector<int>>();
  if (shape.size() != 3 || shape[0] != 3 || shape[1] <= 0 || shape[2] <= 0)
    throw IoError("raw tensor " + path.string() + " must have shape [3, H, W]");
  const auto bytes = read_bytes(path);
  const int h = shape[1], w = shape[2];
  const std::size_t n = static_cast<std::size_t>(3) * h * w;
  if (bytes.size() != n * 4) throw IoError("raw tensor " + path.string() + " has wrong byte length");
  Image img(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t src = ((static_cast<std::size_t>(c) * h + y) * w + x) * 4;
        std::uint32_t bits = static_cast<std::uint32_t>(bytes[src]) | static_cast<std::uint32_t>(bytes[src + 1]) << 8 |
                             static_cast<std::uint32_t>(bytes[src + 2]) << 16 |
                             static_cast<std::uint32_t>(bytes[src + 3]) << 24;
        img.at(y, x, c) = std::bit_cast<float>(bits);
      }
  return img;
}

void write_raw_tensor(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.pixels.size() * 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const auto bits = std::bit_cast<std::uint32_t>(image.at(y, x, c));
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  auto sidecar_path = path;
  sidecar_path += ".json";
  std::ofstream side(sidecar_path);
  side << nlohmann::json{{"shape", {3, image.height, image.width}}, {"dtype", "f32"}, {"order", "row-major"}}.dump()
       << '\n';
  if (!out || !side) throw IoError("write failed for " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".f32") return read_raw_tensor(path);
  return to_float(read_ppm(path));
}

}  // namespace ds
