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

#include "keymask/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <utility>
#include <unistd.h>

#include "keymask/errors.hpp"

namespace keymask {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("error writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

Json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

void write_json(const fs::path& path, const Json& value) {
  write_file_atomic(path, value.dump(1) + "\n");
}

void check_schema_version(const Json& doc, const std::string& origin) {
  if (!doc.is_object()) throw FormatError(origin + ": top-level value must be an object");
  if (!doc.contains("schema_version")) return;
  const Json& v = doc["schema_version"];
  if (!v.is_number_integer() || v.get<int64_t>() != kSchemaVersion) {
    throw FormatError(origin + ": unsupported schema_version " + v.dump());
  }
}

namespace {

// Typed field access with the JSON path in error messages.
const Json& field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(where + ": missing field '" + key + "'");
  return *it;
}

int64_t as_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw FormatError(where + ": expected an integer");
  return j.get<int64_t>();
}

double as_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw FormatError(where + ": expected a number");
  return j.get<double>();
}

bool as_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw FormatError(where + ": expected a boolean");
  return j.get<bool>();
}

const std::string& as_string(const Json& j, const std::string& where) {
  if (!j.is_string()) throw FormatError(where + ": expected a string");
  return j.get_ref<const std::string&>();
}

const Json& as_array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array");
  return j;
}

int as_frame_key(const std::string& key, const std::string& where) {
  size_t used = 0;
  int frame = -1;
  try {
    frame = std::stoi(key, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != key.size() || key.empty() || frame < 0) {
    throw FormatError(where + ": frame key '" + key + "' is not a non-negative integer");
  }
  return frame;
}

}  // namespace

Json rle_to_json(const RleMask& mask) {
  return Json{{"size", {mask.height(), mask.width()}}, {"counts", mask.runs()}};
}

RleMask rle_from_json(const Json& j, const std::string& origin) {
  const Json& size = as_array(field(j, "size", origin), origin + ".size");
  if (size.size() != 2) throw FormatError(origin + ".size: expected [h, w]");
  const int64_t h = as_int(size[0], origin + ".size[0]");
  const int64_t w = as_int(size[1], origin + ".size[1]");
  const Json& counts = as_array(field(j, "counts", origin), origin + ".counts");
  std::vector<uint32_t> runs;
  runs.reserve(counts.size());
  for (size_t k = 0; k < counts.size(); ++k) {
    const int64_t run = as_int(counts[k], origin + ".counts[" + std::to_string(k) + "]");
    if (run < 0 || run > UINT32_MAX) throw FormatError(origin + ".counts: run length out of range");
    runs.push_back(static_cast<uint32_t>(run));
  }
  if (h <= 0 || w <= 0 || h > (1 << 20) || w > (1 << 20)) {
    throw FormatError(origin + ".size: dimensions out of range");
  }
  try {
    return RleMask(static_cast<int>(h), static_cast<int>(w), std::move(runs));
  } catch (const Error& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

Json labelset_to_json(const Labelset& labels) {
  Json videos = Json::array();
  for (const auto& v : labels.videos) {
    Json instances = Json::array();
    for (const auto& inst : v.instances) {
      Json masks = Json::object();
      for (const auto& [t, m] : inst.masks) masks[std::to_string(t)] = rle_to_json(m);
      Json ji{{"id", inst.id}, {"masks", std::move(masks)}, {"score", inst.score}};
      if (!inst.sources.empty()) {
        Json sources = Json::object();
        for (const auto& [t, s] : inst.sources) sources[std::to_string(t)] = s;
        ji["sources"] = std::move(sources);
      }
      instances.push_back(std::move(ji));
    }
    videos.push_back(Json{{"id", v.id},
                          {"T", v.num_frames},
                          {"instances", std::move(instances)},
                          {"discarded", v.discarded}});
  }
  return Json{{"schema_version", kSchemaVersion},
              {"kind", to_string(labels.kind)},
              {"videos", std::move(videos)}};
}

Labelset labelset_from_json(const Json& j, const std::string& origin) {
  check_schema_version(j, origin);
  Labelset out;
  if (j.contains("kind")) {
    try {
      out.kind = labelset_kind_from_string(as_string(j["kind"], origin + ".kind"));
    } catch (const InputError& e) {
      throw FormatError(origin + ".kind: " + e.what());
    }
  }
  const Json& videos = as_array(field(j, "videos", origin), origin + ".videos");
  std::set<std::string> video_ids;
  for (size_t vi = 0; vi < videos.size(); ++vi) {
    const std::string vw = origin + ".videos[" + std::to_string(vi) + "]";
    const Json& jv = videos[vi];
    VideoLabels v;
    v.id = as_string(field(jv, "id", vw), vw + ".id");
    if (!video_ids.insert(v.id).second) throw FormatError(vw + ".id: duplicate video '" + v.id + "'");
    const int64_t frames = as_int(field(jv, "T", vw), vw + ".T");
    if (frames < 1) throw FormatError(vw + ".T: must be >= 1");
    v.num_frames = static_cast<int>(frames);
    if (jv.contains("discarded")) v.discarded = as_bool(jv["discarded"], vw + ".discarded");
    const Json& instances = as_array(field(jv, "instances", vw), vw + ".instances");
    std::set<int> instance_ids;
    std::optional<std::pair<int, int>> dims;
    for (size_t ii = 0; ii < instances.size(); ++ii) {
      const std::string iw = vw + ".instances[" + std::to_string(ii) + "]";
      const Json& ji = instances[ii];
      InstanceLabels inst;
      inst.id = static_cast<int>(as_int(field(ji, "id", iw), iw + ".id"));
      if (!instance_ids.insert(inst.id).second) throw FormatError(iw + ".id: duplicate instance id");
      if (ji.contains("score")) inst.score = as_number(ji["score"], iw + ".score");
      const Json& masks = field(ji, "masks", iw);
      if (!masks.is_object()) throw FormatError(iw + ".masks: expected an object");
      for (const auto& [key, jm] : masks.items()) {
        const std::string mw = iw + ".masks." + key;
        const int t = as_frame_key(key, mw);
        if (t >= v.num_frames) throw FormatError(mw + ": frame outside the video");
        RleMask mask = rle_from_json(jm, mw);
        const std::pair<int, int> hw{mask.height(), mask.width()};
        if (dims && *dims != hw) throw FormatError(mw + ": mask size differs from the video's other masks");
        dims = hw;
        inst.masks.emplace(t, std::move(mask));
      }
      if (ji.contains("sources")) {
        const Json& sources = ji["sources"];
        if (!sources.is_object()) throw FormatError(iw + ".sources: expected an object");
        for (const auto& [key, js] : sources.items()) {
          const std::string sw = iw + ".sources." + key;
          inst.sources.emplace(as_frame_key(key, sw), static_cast<int>(as_int(js, sw)));
        }
      }
      v.instances.push_back(std::move(inst));
    }
    out.videos.push_back(std::move(v));
  }
  return out;
}

void write_labelset(const fs::path& path, const Labelset& labels) {
  write_json(path, labelset_to_json(labels));
}

Labelset read_labelset(const fs::path& path) {
  return labelset_from_json(read_json(path), path.string());
}

Json track_file_to_json(const TrackFile& file) {
  Json tracks = Json::array();
  for (const auto& track : file.tracks) {
    Json points = Json::array();
    for (const auto& traj : track.trajectories) {
      Json xy = Json::array();
      for (const auto& p : traj.coords) xy.push_back({p.x, p.y});
      Json vis = Json::array();
      for (bool b : traj.visible) vis.push_back(b);
      points.push_back(Json{{"xy", std::move(xy)}, {"vis", std::move(vis)}});
    }
    tracks.push_back(Json{{"source_frame", track.source_frame},
                          {"mask", rle_to_json(track.source_mask)},
                          {"points", std::move(points)}});
  }
  return Json{{"schema_version", kSchemaVersion}, {"id", file.id},         {"T", file.num_frames},
              {"height", file.height},            {"width", file.width},   {"tracks", std::move(tracks)}};
}

TrackFile track_file_from_json(const Json& j, const std::string& origin) {
  check_schema_version(j, origin);
  TrackFile out;
  if (j.contains("id")) out.id = as_string(j["id"], origin + ".id");
  const int64_t frames = as_int(field(j, "T", origin), origin + ".T");
  if (frames < 1) throw FormatError(origin + ".T: must be >= 1");
  out.num_frames = static_cast<int>(frames);
  const Json& tracks = as_array(field(j, "tracks", origin), origin + ".tracks");
  for (size_t k = 0; k < tracks.size(); ++k) {
    const std::string tw = origin + ".tracks[" + std::to_string(k) + "]";
    const Json& jt = tracks[k];
    InstanceTrack track;
    track.source_video = out.id;
    track.source_frame = static_cast<int>(as_int(field(jt, "source_frame", tw), tw + ".source_frame"));
    track.source_mask = rle_from_json(field(jt, "mask", tw), tw + ".mask");
    const Json& points = as_array(field(jt, "points", tw), tw + ".points");
    for (size_t p = 0; p < points.size(); ++p) {
      const std::string pw = tw + ".points[" + std::to_string(p) + "]";
      const Json& xy = as_array(field(points[p], "xy", pw), pw + ".xy");
      const Json& vis = as_array(field(points[p], "vis", pw), pw + ".vis");
      if (static_cast<int64_t>(xy.size()) != frames || static_cast<int64_t>(vis.size()) != frames) {
        throw FormatError(pw + ": expected " + std::to_string(frames) + " positions and flags");
      }
      Trajectory traj;
      for (size_t t = 0; t < xy.size(); ++t) {
        const std::string cw = pw + ".xy[" + std::to_string(t) + "]";
        if (!xy[t].is_array() || xy[t].size() != 2) throw FormatError(cw + ": expected [x, y]");
        traj.coords.push_back({as_number(xy[t][0], cw), as_number(xy[t][1], cw)});
        traj.visible.push_back(as_bool(vis[t], pw + ".vis[" + std::to_string(t) + "]"));
      }
      track.trajectories.push_back(std::move(traj));
    }
    if (out.height == 0) {
      out.height = track.source_mask.height();
      out.width = track.source_mask.width();
    }
    out.tracks.push_back(std::move(track));
  }
  if (j.contains("height")) out.height = static_cast<int>(as_int(j["height"], origin + ".height"));
  if (j.contains("width")) out.width = static_cast<int>(as_int(j["width"], origin + ".width"));
  for (size_t k = 0; k < out.tracks.size(); ++k) {
    const InstanceTrack& track = out.tracks[k];
    const std::string tw = origin + ".tracks[" + std::to_string(k) + "]";
    if (track.source_mask.height() != out.height || track.source_mask.width() != out.width) {
      throw FormatError(tw + ".mask: size differs from the video");
    }
    if (track.source_frame < 0 || track.source_frame >= out.num_frames) {
      throw FormatError(tw + ".source_frame: outside the video");
    }
    try {
      validate_track(track);
    } catch (const InputError& e) {
      throw FormatError(tw + ": " + e.what());
    }
  }
  return out;
}

void write_track_file(const fs::path& path, const TrackFile& file) {
  write_json(path, track_file_to_json(file));
}

TrackFile read_track_file(const fs::path& path) {
  return track_file_from_json(read_json(path), path.string());
}

namespace {

constexpr char kFeatureMagic[8] = {'K', 'M', 'F', 'E', 'A', 'T', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    char raw[sizeof(T)];
    take(raw, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  void take(char* dst, size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError(origin_ + ": truncated file");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace

std::string encode_features(const FeatureVideo& video) {
  std::string out(kFeatureMagic, sizeof(kFeatureMagic));
  put_le<uint32_t>(out, static_cast<uint32_t>(video.frames()));
  put_le<uint32_t>(out, static_cast<uint32_t>(video.height()));
  put_le<uint32_t>(out, static_cast<uint32_t>(video.width()));
  put_le<uint32_t>(out, static_cast<uint32_t>(video.channels()));
  out.reserve(out.size() + video.data().size() * sizeof(float));
  for (float v : video.data()) put_le<float>(out, v);
  return out;
}

FeatureVideo decode_features(const std::string& bytes, const std::string& origin) {
  Reader in(bytes, origin);
  char magic[sizeof(kFeatureMagic)];
  in.take(magic, sizeof(magic));
  if (std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    throw FormatError(origin + ": not a feature file");
  }
  const uint32_t t = in.get<uint32_t>(), h = in.get<uint32_t>(), w = in.get<uint32_t>(),
                 c = in.get<uint32_t>();
  const uint64_t count = uint64_t{t} * h * w * c;
  if (t == 0 || h == 0 || w == 0 || c == 0 || in.remaining() != count * sizeof(float)) {
    throw FormatError(origin + ": header does not match payload size");
  }
  FeatureVideo video(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (float& v : video.data()) v = in.get<float>();
  return video;
}

void write_features(const fs::path& path, const FeatureVideo& video) {
  write_file_atomic(path, encode_features(video));
}

FeatureVideo read_features(const fs::path& path) {
  return decode_features(read_file(path), path.string());
}

std::string encode_model(const ToyPropagator& model) {
  const PropagatorShape& s = model.shape();
  const std::string header = Json{{"schema_version", kSchemaVersion},
                                  {"num_slots", s.num_slots},
                                  {"feature_dim", s.feature_dim},
                                  {"max_frames", s.max_frames}}
                                 .dump();
  std::string out;
  put_le<uint64_t>(out, header.size());
  out += header;
  put_le<uint64_t>(out, model.params().size());
  for (double v : model.params()) put_le<double>(out, v);
  return out;
}

ToyPropagator decode_model(const std::string& bytes, const std::string& origin) {
  Reader in(bytes, origin);
  const uint64_t header_len = in.get<uint64_t>();
  if (header_len > in.remaining()) throw FormatError(origin + ": truncated header");
  std::string header(header_len, '\0');
  in.take(header.data(), header.size());
  const Json j = parse_json(header, origin + " (header)");
  check_schema_version(j, origin);
  PropagatorShape shape;
  shape.num_slots = static_cast<int>(as_int(field(j, "num_slots", origin), origin + ".num_slots"));
  shape.feature_dim = static_cast<int>(as_int(field(j, "feature_dim", origin), origin + ".feature_dim"));
  shape.max_frames = static_cast<int>(as_int(field(j, "max_frames", origin), origin + ".max_frames"));
  if (shape.num_slots < 1 || shape.feature_dim < 1 || shape.max_frames < 1) {
    throw FormatError(origin + ": invalid model shape");
  }
  const uint64_t count = in.get<uint64_t>();
  if (count != shape.num_params() || in.remaining() != count * sizeof(double)) {
    throw FormatError(origin + ": parameter count does not match the header");
  }
  ParamVector params(count);
  for (double& v : params) v = in.get<double>();
  return ToyPropagator(shape, std::move(params));
}

void write_model(const fs::path& path, const ToyPropagator& model) {
  write_file_atomic(path, encode_model(model));
}

ToyPropagator read_model(const fs::path& path) { return decode_model(read_file(path), path.string()); }

}  // namespace keymask
