// Copyright 2026 The Keymask Authors.
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

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "keymask/labelset.hpp"
#include "keymask/mask.hpp"
#include "keymask/propagator.hpp"
#include "keymask/synth.hpp"
#include "keymask/track.hpp"

namespace keymask {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Whole-file helpers. Writes go to a temporary sibling that is renamed over
// the target. Throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

// Parses JSON text; syntax errors become FormatError with the path and the
// byte offset of the problem.
Json parse_json(const std::string& text, const std::string& origin);
Json read_json(const std::filesystem::path& path);
// Pretty-printed with sorted keys and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& value);

// Throws FormatError unless the document's major schema version is known.
// A missing field reads as version 1.
void check_schema_version(const Json& doc, const std::string& origin);

// {"size":[h,w],"counts":[...]}
Json rle_to_json(const RleMask& mask);
RleMask rle_from_json(const Json& j, const std::string& origin);

Json labelset_to_json(const Labelset& labels);
Labelset labelset_from_json(const Json& j, const std::string& origin);
void write_labelset(const std::filesystem::path& path, const Labelset& labels);
Labelset read_labelset(const std::filesystem::path& path);

// Single-frame masks of one video with their point trajectories.
struct TrackFile {
  std::string id;
  int num_frames = 0;
  int height = 0;
  int width = 0;
  std::vector<InstanceTrack> tracks;

  friend bool operator==(const TrackFile&, const TrackFile&) = default;
};

Json track_file_to_json(const TrackFile& file);
TrackFile track_file_from_json(const Json& j, const std::string& origin);
void write_track_file(const std::filesystem::path& path, const TrackFile& file);
TrackFile read_track_file(const std::filesystem::path& path);

// Binary feature frames: 8-byte magic, u32 frames/height/width/channels,
// then float32 values, all little-endian.
std::string encode_features(const FeatureVideo& video);
FeatureVideo decode_features(const std::string& bytes, const std::string& origin);
void write_features(const std::filesystem::path& path, const FeatureVideo& video);
FeatureVideo read_features(const std::filesystem::path& path);

// Model file: u64 header length, JSON header, u64 parameter count, float64
// parameters, all little-endian.
std::string encode_model(const ToyPropagator& model);
ToyPropagator decode_model(const std::string& bytes, const std::string& origin);
void write_model(const std::filesystem::path& path, const ToyPropagator& model);
ToyPropagator read_model(const std::filesystem::path& path);

}  // namespace keymask
