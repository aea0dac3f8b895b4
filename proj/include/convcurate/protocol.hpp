// Copyright (c) 2026 The convcurate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Versioned request/response protocol spoken to inference backends.
//
// Every message is one compact JSON object terminated by '\n'. Keys are
// emitted in sorted order and numbers in shortest round-trip form, so the
// encoding of a decoded canonical frame reproduces it byte for byte.
// docs/protocol.md carries the field-by-field description.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "convcurate/audio.hpp"
#include "convcurate/base64.hpp"
#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"
#include "convcurate/vad_chunker.hpp"
#include "convcurate/wav.hpp"

namespace convcurate {

inline constexpr int kProtocolVersion = 1;

enum class TaskKind {
  kVad,
  kDiarize,
  kSeparate2,
  kEmbed,
  kTagAudio,
  kExtractVocals,
  kDenoise,
  kAsr,
  kCaption,
};

inline constexpr std::array<TaskKind, 9> kAllTaskKinds = {
    TaskKind::kVad,      TaskKind::kDiarize,       TaskKind::kSeparate2,
    TaskKind::kEmbed,    TaskKind::kTagAudio,      TaskKind::kExtractVocals,
    TaskKind::kDenoise,  TaskKind::kAsr,           TaskKind::kCaption};

inline const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kVad: return "vad";
    case TaskKind::kDiarize: return "diarize";
    case TaskKind::kSeparate2: return "separate2";
    case TaskKind::kEmbed: return "embed";
    case TaskKind::kTagAudio: return "tag_audio";
    case TaskKind::kExtractVocals: return "extract_vocals";
    case TaskKind::kDenoise: return "denoise";
    case TaskKind::kAsr: return "asr";
    case TaskKind::kCaption: return "caption";
  }
  return "?";
}

inline std::optional<TaskKind> task_kind_from_string(std::string_view s) {
  for (TaskKind k : kAllTaskKinds)
    if (s == to_string(k)) return k;
  return std::nullopt;
}

class ProtocolError : public Error {
 public:
  ProtocolError(std::string position, const std::string& what)
      : Error(ErrorCode::kProtocol, what + " (at " + position + ")"),
        position_(std::move(position)) {}

  // Byte offset ("byte 17") for syntax errors, JSON pointer otherwise.
  const std::string& position() const noexcept { return position_; }

 private:
  std::string position_;
};

// ---------------------------------------------------------------------------
// Payloads

struct FileRef {
  std::string path;
  TimeInterval interval;
  friend bool operator==(const FileRef&, const FileRef&) = default;
};

// Mono PCM carried inline; quantized to 16 bits on the wire.
struct InlinePcm {
  AudioBuffer audio;
  friend bool operator==(const InlinePcm&, const InlinePcm&) = default;
};

using AudioPayload = std::variant<FileRef, InlinePcm>;

struct TaskRequest {
  std::string request_id;
  int protocol_version = kProtocolVersion;
  TaskKind kind = TaskKind::kVad;
  AudioPayload payload;
  nlohmann::json params = nlohmann::json::object();
};

// Times in results are relative to the start of the request's audio.
struct DiarizeResult {
  std::vector<SpeakerSegment> segments;
};
struct SeparateResult {
  std::array<AudioBuffer, 2> sources;
};
struct EmbedResult {
  std::vector<double> vector;
};
struct TagResult {
  double music_prob = 0.0;
};
struct AudioResult {
  AudioBuffer audio;
};
struct RecognizedWord {
  std::string surface;
  std::optional<TimeInterval> interval;
};
struct AsrResult {
  std::string model_id;
  std::vector<RecognizedWord> words;
};
struct CaptionResult {
  std::string text;
};

using TaskPayload =
    std::variant<VadFrameSeries, DiarizeResult, SeparateResult, EmbedResult,
                 TagResult, AudioResult, AsrResult, CaptionResult>;

struct TaskError {
  std::string code;
  std::string message;
};

struct TaskResponse {
  std::string request_id;
  int protocol_version = kProtocolVersion;
  TaskKind kind = TaskKind::kVad;
  std::variant<TaskPayload, TaskError> outcome;
  double timing_s = 0.0;

  bool ok() const { return std::holds_alternative<TaskPayload>(outcome); }
  const TaskError& error() const { return std::get<TaskError>(outcome); }

  template <typename T>
  const T& get() const {
    return std::get<T>(std::get<TaskPayload>(outcome));
  }

  static TaskResponse failure(const TaskRequest& req, std::string code,
                              std::string message, double timing_s = 0.0) {
    TaskResponse r;
    r.request_id = req.request_id;
    r.kind = req.kind;
    r.outcome = TaskError{std::move(code), std::move(message)};
    r.timing_s = timing_s;
    return r;
  }
};

struct Capability {
  TaskKind kind = TaskKind::kVad;
  // Empty means the kind is served without model selection.
  std::vector<std::string> models;
};

// Capability handshake sent once by a backend after connecting.
struct Hello {
  int protocol_version = kProtocolVersion;
  std::vector<Capability> capabilities;

  const Capability* find(TaskKind kind) const {
    for (const auto& c : capabilities)
      if (c.kind == kind) return &c;
    return nullptr;
  }
};

using Message = std::variant<Hello, TaskRequest, TaskResponse>;

// Payload alternative each task kind must carry.
inline std::size_t payload_index_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::kVad: return 0;
    case TaskKind::kDiarize: return 1;
    case TaskKind::kSeparate2: return 2;
    case TaskKind::kEmbed: return 3;
    case TaskKind::kTagAudio: return 4;
    case TaskKind::kExtractVocals:
    case TaskKind::kDenoise: return 5;
    case TaskKind::kAsr: return 6;
    case TaskKind::kCaption: return 7;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Encoding

namespace protocol_detail {

using nlohmann::json;

inline json pcm_to_json(const AudioBuffer& audio) {
  if (audio.channel_count != 1)
    throw Error(ErrorCode::kInvalidArgument, "inline PCM must be mono");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(audio.samples.size() * 2);
  for (double v : audio.samples) {
    const auto q = static_cast<std::uint16_t>(quantize_pcm16(v));
    bytes.push_back(static_cast<std::uint8_t>(q & 0xff));
    bytes.push_back(static_cast<std::uint8_t>(q >> 8));
  }
  return json{{"sample_rate_hz", audio.sample_rate_hz},
              {"pcm_s16le", base64::encode(bytes)}};
}

inline json interval_to_json(const TimeInterval& t) {
  return json{{"start_s", t.start_s}, {"end_s", t.end_s}};
}

inline json payload_to_json(const AudioPayload& p) {
  if (const auto* f = std::get_if<FileRef>(&p)) {
    json j = interval_to_json(f->interval);
    j["kind"] = "file";
    j["path"] = f->path;
    return j;
  }
  json j = pcm_to_json(std::get<InlinePcm>(p).audio);
  j["kind"] = "pcm";
  return j;
}

inline json result_to_json(const TaskPayload& p) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, VadFrameSeries>) {
          return json{{"hop_s", v.hop_s}, {"probs", v.probs}};
        } else if constexpr (std::is_same_v<T, DiarizeResult>) {
          json segs = json::array();
          for (const auto& s : v.segments) {
            json j = interval_to_json(s.interval);
            j["speaker_id"] = s.speaker_id;
            segs.push_back(std::move(j));
          }
          return json{{"segments", std::move(segs)}};
        } else if constexpr (std::is_same_v<T, SeparateResult>) {
          return json{{"sources", json::array({pcm_to_json(v.sources[0]),
                                               pcm_to_json(v.sources[1])})}};
        } else if constexpr (std::is_same_v<T, EmbedResult>) {
          return json{{"vector", v.vector}};
        } else if constexpr (std::is_same_v<T, TagResult>) {
          return json{{"music_prob", v.music_prob}};
        } else if constexpr (std::is_same_v<T, AudioResult>) {
          return json{{"audio", pcm_to_json(v.audio)}};
        } else if constexpr (std::is_same_v<T, AsrResult>) {
          json words = json::array();
          for (const auto& w : v.words) {
            json j{{"surface", w.surface}};
            if (w.interval) {
              j["start_s"] = w.interval->start_s;
              j["end_s"] = w.interval->end_s;
            }
            words.push_back(std::move(j));
          }
          return json{{"model_id", v.model_id}, {"words", std::move(words)}};
        } else {
          return json{{"text", v.text}};
        }
      },
      p);
}

}  // namespace protocol_detail

inline nlohmann::json to_json(const Message& msg) {
  using namespace protocol_detail;
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          json caps = json::array();
          for (const auto& c : m.capabilities)
            caps.push_back(json{{"task", to_string(c.kind)}, {"models", c.models}});
          return json{{"type", "hello"}, {"v", m.protocol_version},
                      {"capabilities", std::move(caps)}};
        } else if constexpr (std::is_same_v<T, TaskRequest>) {
          return json{{"type", "request"},
                      {"v", m.protocol_version},
                      {"request_id", m.request_id},
                      {"task", to_string(m.kind)},
                      {"audio", payload_to_json(m.payload)},
                      {"params", m.params}};
        } else {
          json j{{"type", "response"},
                 {"v", m.protocol_version},
                 {"request_id", m.request_id},
                 {"task", to_string(m.kind)},
                 {"timing_s", m.timing_s}};
          if (m.ok()) {
            j["ok"] = true;
            j["result"] = result_to_json(std::get<TaskPayload>(m.outcome));
          } else {
            j["ok"] = false;
            j["error"] = json{{"code", m.error().code}, {"message", m.error().message}};
          }
          return j;
        }
      },
      msg);
}

inline std::string encode(const Message& msg) { return to_json(msg).dump() + "\n"; }

// ---------------------------------------------------------------------------
// Decoding

namespace protocol_detail {

class Reader {
 public:
  static const json& field(const json& obj, const std::string& path,
                           const char* key) {
    auto it = obj.find(key);
    if (it == obj.end())
      throw ProtocolError(path, std::string("missing field '") + key + "'");
    return *it;
  }

  static void only_keys(const json& obj, const std::string& path,
                        std::initializer_list<const char*> keys) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known)
        throw ProtocolError(path + "/" + it.key(), "unexpected field");
    }
  }

  static const json& object(const json& obj, const std::string& path,
                            const char* key) {
    const auto& v = field(obj, path, key);
    if (!v.is_object()) throw ProtocolError(path + "/" + key, "expected object");
    return v;
  }
  static const json& array(const json& obj, const std::string& path,
                           const char* key) {
    const auto& v = field(obj, path, key);
    if (!v.is_array()) throw ProtocolError(path + "/" + key, "expected array");
    return v;
  }
  static std::string string(const json& obj, const std::string& path,
                            const char* key) {
    const auto& v = field(obj, path, key);
    if (!v.is_string()) throw ProtocolError(path + "/" + key, "expected string");
    return v.get<std::string>();
  }
  static double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ProtocolError(path, "expected number");
    return v.get<double>();
  }
  static double number(const json& obj, const std::string& path,
                       const char* key) {
    return number(field(obj, path, key), path + "/" + key);
  }
  static int integer(const json& obj, const std::string& path, const char* key) {
    const auto& v = field(obj, path, key);
    if (!v.is_number_integer())
      throw ProtocolError(path + "/" + key, "expected integer");
    return v.get<int>();
  }
  static bool boolean(const json& obj, const std::string& path, const char* key) {
    const auto& v = field(obj, path, key);
    if (!v.is_boolean()) throw ProtocolError(path + "/" + key, "expected boolean");
    return v.get<bool>();
  }
};

inline TaskKind kind_field(const json& obj, const std::string& path) {
  const auto s = Reader::string(obj, path, "task");
  auto k = task_kind_from_string(s);
  if (!k) throw ProtocolError(path + "/task", "unknown task kind '" + s + "'");
  return *k;
}

inline AudioBuffer pcm_from_json(const json& j, const std::string& path,
                                 bool allow_kind = false) {
  if (!j.is_object()) throw ProtocolError(path, "expected object");
  if (allow_kind)
    Reader::only_keys(j, path, {"kind", "sample_rate_hz", "pcm_s16le"});
  else
    Reader::only_keys(j, path, {"sample_rate_hz", "pcm_s16le"});
  AudioBuffer out{{}, Reader::integer(j, path, "sample_rate_hz"), 1};
  if (out.sample_rate_hz <= 0)
    throw ProtocolError(path + "/sample_rate_hz", "must be positive");
  auto bytes = base64::decode(Reader::string(j, path, "pcm_s16le"));
  if (!bytes || bytes->size() % 2 != 0)
    throw ProtocolError(path + "/pcm_s16le", "invalid base64 PCM");
  out.samples.resize(bytes->size() / 2);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const auto u = static_cast<std::uint16_t>((*bytes)[2 * i] |
                                              ((*bytes)[2 * i + 1] << 8));
    out.samples[i] = dequantize_pcm16(static_cast<std::int16_t>(u));
  }
  return out;
}

inline TimeInterval interval_from_json(const json& j, const std::string& path) {
  TimeInterval t{Reader::number(j, path, "start_s"), Reader::number(j, path, "end_s")};
  if (t.end_s < t.start_s) throw ProtocolError(path, "end_s before start_s");
  return t;
}

inline AudioPayload payload_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ProtocolError(path, "expected object");
  const auto kind = Reader::string(j, path, "kind");
  if (kind == "file") {
    Reader::only_keys(j, path, {"kind", "path", "start_s", "end_s"});
    return FileRef{Reader::string(j, path, "path"), interval_from_json(j, path)};
  }
  if (kind == "pcm") return InlinePcm{pcm_from_json(j, path, true)};
  throw ProtocolError(path + "/kind", "unknown audio payload kind '" + kind + "'");
}

inline TaskPayload result_from_json(TaskKind kind, const json& j,
                                    const std::string& path) {
  if (!j.is_object()) throw ProtocolError(path, "expected object");
  switch (kind) {
    case TaskKind::kVad: {
      Reader::only_keys(j, path, {"hop_s", "probs"});
      VadFrameSeries v;
      v.hop_s = Reader::number(j, path, "hop_s");
      if (!(v.hop_s > 0)) throw ProtocolError(path + "/hop_s", "must be positive");
      const auto& probs = Reader::array(j, path, "probs");
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = Reader::number(probs[i], path + "/probs/" + std::to_string(i));
        if (p < 0.0 || p > 1.0)
          throw ProtocolError(path + "/probs/" + std::to_string(i), "probability out of range");
        v.probs.push_back(p);
      }
      return v;
    }
    case TaskKind::kDiarize: {
      Reader::only_keys(j, path, {"segments"});
      DiarizeResult d;
      const auto& segs = Reader::array(j, path, "segments");
      for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto p = path + "/segments/" + std::to_string(i);
        if (!segs[i].is_object()) throw ProtocolError(p, "expected object");
        Reader::only_keys(segs[i], p, {"speaker_id", "start_s", "end_s"});
        SpeakerSegment s;
        s.speaker_id = Reader::string(segs[i], p, "speaker_id");
        s.interval = interval_from_json(segs[i], p);
        d.segments.push_back(std::move(s));
      }
      return d;
    }
    case TaskKind::kSeparate2: {
      Reader::only_keys(j, path, {"sources"});
      const auto& src = Reader::array(j, path, "sources");
      if (src.size() != 2) throw ProtocolError(path + "/sources", "expected two sources");
      SeparateResult r;
      r.sources[0] = pcm_from_json(src[0], path + "/sources/0");
      r.sources[1] = pcm_from_json(src[1], path + "/sources/1");
      return r;
    }
    case TaskKind::kEmbed: {
      Reader::only_keys(j, path, {"vector"});
      EmbedResult e;
      const auto& vec = Reader::array(j, path, "vector");
      for (std::size_t i = 0; i < vec.size(); ++i)
        e.vector.push_back(Reader::number(vec[i], path + "/vector/" + std::to_string(i)));
      return e;
    }
    case TaskKind::kTagAudio: {
      Reader::only_keys(j, path, {"music_prob"});
      TagResult t{Reader::number(j, path, "music_prob")};
      if (t.music_prob < 0.0 || t.music_prob > 1.0)
        throw ProtocolError(path + "/music_prob", "probability out of range");
      return t;
    }
    case TaskKind::kExtractVocals:
    case TaskKind::kDenoise: {
      Reader::only_keys(j, path, {"audio"});
      return AudioResult{pcm_from_json(Reader::field(j, path, "audio"), path + "/audio")};
    }
    case TaskKind::kAsr: {
      Reader::only_keys(j, path, {"model_id", "words"});
      AsrResult a;
      a.model_id = Reader::string(j, path, "model_id");
      const auto& words = Reader::array(j, path, "words");
      for (std::size_t i = 0; i < words.size(); ++i) {
        const auto p = path + "/words/" + std::to_string(i);
        if (!words[i].is_object()) throw ProtocolError(p, "expected object");
        Reader::only_keys(words[i], p, {"surface", "start_s", "end_s"});
        RecognizedWord w;
        w.surface = Reader::string(words[i], p, "surface");
        const bool has_start = words[i].contains("start_s");
        if (has_start != words[i].contains("end_s"))
          throw ProtocolError(p, "start_s and end_s must appear together");
        if (has_start) w.interval = interval_from_json(words[i], p);
        a.words.push_back(std::move(w));
      }
      return a;
    }
    case TaskKind::kCaption: {
      Reader::only_keys(j, path, {"text"});
      return CaptionResult{Reader::string(j, path, "text")};
    }
  }
  throw ProtocolError(path, "unhandled task kind");
}

}  // namespace protocol_detail

// Parses one frame. A single trailing newline is accepted; anything else
// malformed raises ProtocolError carrying the offending position.
inline Message decode(std::string_view frame) {
  using namespace protocol_detail;
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  if (const auto nl = frame.find('\n'); nl != std::string_view::npos)
    throw ProtocolError("byte " + std::to_string(nl), "embedded newline in frame");
  json j;
  try {
    j = json::parse(frame);
  } catch (const json::parse_error& e) {
    throw ProtocolError("byte " + std::to_string(e.byte), "malformed JSON");
  }
  if (!j.is_object()) throw ProtocolError("", "frame must be a JSON object");
  const auto type = Reader::string(j, "", "type");
  const int version = Reader::integer(j, "", "v");
  if (version != kProtocolVersion)
    throw ProtocolError("/v", "unsupported protocol version " + std::to_string(version));

  if (type == "hello") {
    Reader::only_keys(j, "", {"type", "v", "capabilities"});
    Hello h;
    h.protocol_version = version;
    const auto& caps = Reader::array(j, "", "capabilities");
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const auto p = "/capabilities/" + std::to_string(i);
      if (!caps[i].is_object()) throw ProtocolError(p, "expected object");
      Reader::only_keys(caps[i], p, {"task", "models"});
      Capability c;
      c.kind = kind_field(caps[i], p);
      const auto& models = Reader::array(caps[i], p, "models");
      for (std::size_t k = 0; k < models.size(); ++k) {
        if (!models[k].is_string())
          throw ProtocolError(p + "/models/" + std::to_string(k), "expected string");
        c.models.push_back(models[k].get<std::string>());
      }
      h.capabilities.push_back(std::move(c));
    }
    return h;
  }
  if (type == "request") {
    Reader::only_keys(j, "", {"type", "v", "request_id", "task", "audio", "params"});
    TaskRequest r;
    r.protocol_version = version;
    r.request_id = Reader::string(j, "", "request_id");
    r.kind = kind_field(j, "");
    r.payload = payload_from_json(Reader::field(j, "", "audio"), "/audio");
    r.params = Reader::object(j, "", "params");
    return r;
  }
  if (type == "response") {
    TaskResponse r;
    r.protocol_version = version;
    r.request_id = Reader::string(j, "", "request_id");
    r.kind = kind_field(j, "");
    r.timing_s = Reader::number(j, "", "timing_s");
    if (Reader::boolean(j, "", "ok")) {
      Reader::only_keys(j, "", {"type", "v", "request_id", "task", "timing_s", "ok", "result"});
      r.outcome = result_from_json(r.kind, Reader::field(j, "", "result"), "/result");
    } else {
      Reader::only_keys(j, "", {"type", "v", "request_id", "task", "timing_s", "ok", "error"});
      const auto& e = Reader::object(j, "", "error");
      Reader::only_keys(e, "/error", {"code", "message"});
      r.outcome = TaskError{Reader::string(e, "/error", "code"),
                            Reader::string(e, "/error", "message")};
    }
    return r;
  }
  throw ProtocolError("/type", "unknown message type '" + type + "'");
}

template <typename T>
T decode_as(std::string_view frame) {
  auto msg = decode(frame);
  if (auto* p = std::get_if<T>(&msg)) return std::move(*p);
  throw ProtocolError("/type", "unexpected message type");
}

}  // namespace convcurate
