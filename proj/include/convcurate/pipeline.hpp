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

// End-to-end orchestration: standardize, chunk, diarize, resolve overlaps,
// gate background music, transcribe, caption and select duplex regions,
// one manifest per source file.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "convcurate/asr_ensemble.hpp"
#include "convcurate/audio.hpp"
#include "convcurate/bgm_policy.hpp"
#include "convcurate/dispatcher.hpp"
#include "convcurate/duplex_selector.hpp"
#include "convcurate/error.hpp"
#include "convcurate/flags.hpp"
#include "convcurate/manifest.hpp"
#include "convcurate/metrics/rtf.hpp"
#include "convcurate/mock_backends.hpp"
#include "convcurate/overlap_resolver.hpp"
#include "convcurate/task_context.hpp"
#include "convcurate/timeline.hpp"
#include "convcurate/vad_chunker.hpp"
#include "convcurate/wav.hpp"

namespace convcurate {

// ---------------------------------------------------------------------------
// Configuration

struct StageToggles {
  bool standardize = true;
  bool chunk = true;
  bool diarize = true;
  bool overlap_resolve = true;
  bool bgm = true;
  bool denoise = false;
  bool asr = true;
  bool caption = false;
  bool duplex_select = true;
};

struct BackendEndpoint {
  std::string type;  // "mock", "exec" or "tcp"
  std::size_t connections = 1;
  std::string command;
  std::string host;
  int port = 0;
  mock::MockOptions mock;
};

struct PipelineConfig {
  StageToggles stages;
  int sample_rate_hz = kStandardSampleRate;
  double target_dbfs = kStandardLoudnessDbfs;
  VadOptions vad;
  double max_chunk_s = kDefaultMaxChunkS;
  OverlapPolicy overlap;
  double music_threshold = kDefaultMusicThreshold;
  WindowOptions windows;
  EnsembleOptions asr;
  DuplexOptions duplex;
  // File-backed payloads longer than this go by reference instead of inline.
  double inline_max_s = 10.0;
  std::size_t worker_count = 1;
  std::filesystem::path output_dir = "out";
  std::vector<std::filesystem::path> inputs;
  std::vector<BackendEndpoint> backends;
  DispatchOptions dispatch;
  bool resume = true;
};

// Task kinds an enabled stage sends.
inline std::set<TaskKind> required_kinds(const StageToggles& s, OverlapMode mode) {
  std::set<TaskKind> k;
  if (s.chunk) k.insert(TaskKind::kVad);
  if (s.diarize) k.insert(TaskKind::kDiarize);
  if (s.overlap_resolve && mode == OverlapMode::kCase4Separate) {
    k.insert(TaskKind::kSeparate2);
    k.insert(TaskKind::kEmbed);
  }
  if (s.bgm) {
    k.insert(TaskKind::kTagAudio);
    k.insert(TaskKind::kExtractVocals);
  }
  if (s.denoise) k.insert(TaskKind::kDenoise);
  if (s.asr) k.insert(TaskKind::kAsr);
  if (s.caption) k.insert(TaskKind::kCaption);
  return k;
}

namespace config_detail {

using nlohmann::json;

class Walker {
 public:
  Walker(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::kConfig, where() + " must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_[key].get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::kConfig, path_ + "/" + key + " has the wrong type");
    }
  }
  std::optional<Walker> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Walker(j_[key], path_ + "/" + key);
  }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_[key];
  }
  bool has(const char* key) const { return j_.contains(key); }
  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(ErrorCode::kConfig, "unknown config key " + path_ + "/" + k);
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void positive(double v, const char* name) {
  if (!(v > 0.0)) throw Error(ErrorCode::kConfig, std::string(name) + " must be positive");
}

}  // namespace config_detail

// Parses the declarative config. Unknown keys and bad values are config
// errors. Relative paths are resolved against `base`.
inline PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  using config_detail::Walker;
  PipelineConfig c;
  Walker w(j, "");
  if (auto s = w.child("stages")) {
    s->get("standardize", c.stages.standardize);
    s->get("chunk", c.stages.chunk);
    s->get("diarize", c.stages.diarize);
    s->get("overlap_resolve", c.stages.overlap_resolve);
    s->get("bgm", c.stages.bgm);
    s->get("denoise", c.stages.denoise);
    s->get("asr", c.stages.asr);
    s->get("caption", c.stages.caption);
    s->get("duplex_select", c.stages.duplex_select);
    s->done();
  }
  if (auto s = w.child("standardize")) {
    s->get("sample_rate_hz", c.sample_rate_hz);
    s->get("target_dbfs", c.target_dbfs);
    s->done();
  }
  if (auto s = w.child("vad")) {
    s->get("on_thresh", c.vad.on_thresh);
    s->get("off_thresh", c.vad.off_thresh);
    s->get("min_silence_s", c.vad.min_silence_s);
    s->get("min_speech_s", c.vad.min_speech_s);
    s->get("max_chunk_s", c.max_chunk_s);
    s->done();
  }
  if (auto s = w.child("overlap")) {
    std::string mode = to_string(c.overlap.mode);
    std::string assign = c.overlap.assign_mode == AssignMode::kJoint ? "joint" : "first_candidate";
    s->get("mode", mode);
    s->get("assign_mode", assign);
    s->get("min_overlap_s", c.overlap.min_overlap_s);
    s->get("crossfade_s", c.overlap.crossfade_s);
    s->get("min_ref_s", c.overlap.min_ref_s);
    s->done();
    auto m = overlap_mode_from_string(mode);
    if (!m) throw Error(ErrorCode::kConfig, "unknown overlap mode " + mode);
    c.overlap.mode = *m;
    if (assign != "first_candidate" && assign != "joint")
      throw Error(ErrorCode::kConfig, "assign_mode must be 'first_candidate' or 'joint'");
    c.overlap.assign_mode = assign == "joint" ? AssignMode::kJoint : AssignMode::kFirstCandidate;
  }
  if (auto s = w.child("bgm")) {
    s->get("threshold", c.music_threshold);
    s->get("window_s", c.windows.window_s);
    s->get("lead_s", c.windows.lead_s);
    s->done();
  }
  if (auto s = w.child("asr")) {
    s->get("models", c.asr.model_ids);
    s->get("primary", c.asr.primary);
    s->get("min_agreement", c.asr.min_agreement);
    s->get("repetition_n", c.asr.repetition_n);
    s->get("repetition_count", c.asr.repetition_count);
    s->done();
  }
  if (auto s = w.child("duplex")) {
    s->get("max_turn_s", c.duplex.max_turn_s);
    s->get("min_turns", c.duplex.min_turns);
    s->get("max_gap_s", c.duplex.max_gap_s);
    s->done();
  }
  w.get("inline_max_s", c.inline_max_s);
  w.get("worker_count", c.worker_count);
  w.get("resume", c.resume);
  std::string out = c.output_dir.string();
  w.get("output_dir", out);
  c.output_dir = out;
  std::vector<std::string> inputs;
  w.get("inputs", inputs);
  for (const auto& i : inputs) c.inputs.push_back(i);
  if (auto s = w.child("dispatch")) {
    long long ms = c.dispatch.deadline.count();
    s->get("deadline_ms", ms);
    s->get("retries", c.dispatch.retries);
    s->done();
    c.dispatch.deadline = std::chrono::milliseconds(ms);
  }
  if (w.has("backends")) {
    const auto& arr = w.raw("backends");
    if (!arr.is_array()) throw Error(ErrorCode::kConfig, "backends must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Walker b(arr[i], "/backends/" + std::to_string(i));
      BackendEndpoint e;
      b.get("type", e.type);
      b.get("connections", e.connections);
      b.get("command", e.command);
      b.get("host", e.host);
      b.get("port", e.port);
      double noise = e.mock.asr_noise;
      long long latency = 0;
      b.get("asr_noise", noise);
      b.get("seed", e.mock.seed);
      b.get("latency_ms", latency);
      b.get("asr_models", e.mock.asr_models);
      b.done();
      e.mock.asr_noise = noise;
      e.mock.latency = std::chrono::milliseconds(latency);
      if (e.type != "mock" && e.type != "exec" && e.type != "tcp")
        throw Error(ErrorCode::kConfig, "backend type must be mock, exec or tcp");
      if (e.type == "exec" && e.command.empty())
        throw Error(ErrorCode::kConfig, "exec backend needs a command");
      if (e.type == "tcp" && (e.host.empty() || e.port <= 0))
        throw Error(ErrorCode::kConfig, "tcp backend needs host and port");
      if (e.connections == 0) throw Error(ErrorCode::kConfig, "connections must be >= 1");
      c.backends.push_back(std::move(e));
    }
  }
  w.done();

  config_detail::positive(c.max_chunk_s, "vad.max_chunk_s");
  config_detail::positive(c.windows.window_s, "bgm.window_s");
  config_detail::positive(c.inline_max_s, "inline_max_s");
  if (c.sample_rate_hz <= 0) throw Error(ErrorCode::kConfig, "sample_rate_hz must be positive");
  if (c.worker_count == 0) throw Error(ErrorCode::kConfig, "worker_count must be >= 1");
  if (c.music_threshold < 0.0 || c.music_threshold > 1.0)
    throw Error(ErrorCode::kConfig, "bgm.threshold must lie in [0, 1]");
  if (c.asr.model_ids.empty() ||
      std::find(c.asr.model_ids.begin(), c.asr.model_ids.end(), c.asr.primary) == c.asr.model_ids.end())
    throw Error(ErrorCode::kConfig, "asr.primary must be one of asr.models");
  if (c.dispatch.deadline.count() <= 0 || c.dispatch.retries < 0)
    throw Error(ErrorCode::kConfig, "dispatch deadline must be positive and retries >= 0");
  if (!base.empty()) {
    if (c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
    for (auto& p : c.inputs)
      if (p.is_relative()) p = base / p;
  }
  return c;
}

// Applies one "a.b.c=value" override. The value is read as JSON when it
// parses, otherwise as a string. Numeric path parts index arrays.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::kConfig, "override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json* node = &j;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw Error(ErrorCode::kConfig, "empty path component in " + key);
    nlohmann::json* next = nullptr;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(part);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig, "expected an array index in " + key);
      }
      if (idx >= node->size()) throw Error(ErrorCode::kConfig, "index out of range in " + key);
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) throw Error(ErrorCode::kConfig, "cannot descend into " + key);
      next = &(*node)[part];
    }
    if (dot == std::string::npos) {
      *next = value;
      return;
    }
    node = next;
    pos = dot + 1;
  }
}

// Reads a config file, applies overrides and parses it. Relative paths are
// taken relative to the config file.
inline PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                                  const std::vector<std::string>& overrides) {
  nlohmann::json j = nlohmann::json::object();
  std::filesystem::path base = std::filesystem::current_path();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(ErrorCode::kConfig, "cannot read config " + file->string());
    j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::kConfig, "config " + file->string() + " is not valid JSON");
    base = std::filesystem::absolute(*file).parent_path();
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j, base);
}

// Module parameters that shape outputs; recorded in every manifest.
inline nlohmann::json params_json(const PipelineConfig& c) {
  const auto& s = c.stages;
  return {
      {"stages",
       {{"standardize", s.standardize}, {"chunk", s.chunk}, {"diarize", s.diarize},
        {"overlap_resolve", s.overlap_resolve}, {"bgm", s.bgm}, {"denoise", s.denoise},
        {"asr", s.asr}, {"caption", s.caption}, {"duplex_select", s.duplex_select}}},
      {"standardize", {{"sample_rate_hz", c.sample_rate_hz}, {"target_dbfs", c.target_dbfs}}},
      {"vad",
       {{"on_thresh", c.vad.on_thresh}, {"off_thresh", c.vad.off_thresh},
        {"min_silence_s", c.vad.min_silence_s}, {"min_speech_s", c.vad.min_speech_s},
        {"max_chunk_s", c.max_chunk_s}}},
      {"overlap",
       {{"mode", to_string(c.overlap.mode)},
        {"assign_mode", c.overlap.assign_mode == AssignMode::kJoint ? "joint" : "first_candidate"},
        {"min_overlap_s", c.overlap.min_overlap_s}, {"crossfade_s", c.overlap.crossfade_s},
        {"min_ref_s", c.overlap.min_ref_s}}},
      {"bgm", {{"threshold", c.music_threshold}, {"window_s", c.windows.window_s}, {"lead_s", c.windows.lead_s}}},
      {"asr",
       {{"models", c.asr.model_ids}, {"primary", c.asr.primary}, {"min_agreement", c.asr.min_agreement},
        {"repetition_n", c.asr.repetition_n}, {"repetition_count", c.asr.repetition_count}}},
      {"duplex", {{"max_turn_s", c.duplex.max_turn_s}, {"min_turns", c.duplex.min_turns}, {"max_gap_s", c.duplex.max_gap_s}}},
      {"inline_max_s", c.inline_max_s}};
}

// Builds the dispatcher pool. Mock connections share one fixture store.
inline std::unique_ptr<Dispatcher> make_dispatcher(const PipelineConfig& c) {
  auto d = std::make_unique<Dispatcher>(c.dispatch);
  auto store = std::make_shared<mock::FixtureStore>();
  for (const auto& e : c.backends)
    for (std::size_t k = 0; k < e.connections; ++k) {
      if (e.type == "mock")
        d->add(std::make_shared<LoopbackBackend>(std::make_shared<mock::MockBackend>(store, e.mock)));
      else if (e.type == "exec")
        d->add(ProcessBackend::spawn(e.command));
      else
        d->add(TcpBackend::connect(e.host, e.port));
    }
  return d;
}

// Refuses to start when an enabled stage has no backend for its kinds.
inline void check_capabilities(const PipelineConfig& c, const Dispatcher& d) {
  for (auto k : required_kinds(c.stages, c.overlap.mode)) {
    if (k == TaskKind::kAsr) {
      for (const auto& m : c.asr.model_ids)
        if (!d.supports(k, m))
          throw Error(ErrorCode::kConfig, "no backend serves asr model '" + m + "'");
    } else if (!d.supports(k)) {
      throw Error(ErrorCode::kConfig, std::string("no backend serves ") + to_string(k));
    }
  }
}

// ---------------------------------------------------------------------------
// Per-file processing

namespace pipeline_detail {

using nlohmann::json;

inline json flags_json(const Flags& f) { return json(std::vector<std::string>(f.begin(), f.end())); }

inline json words_json(const std::vector<WordToken>& words) {
  json arr = json::array();
  for (const auto& w : words) {
    json jw{{"word", w.surface}};
    jw["start_s"] = w.interval ? json(w.interval->start_s) : json(nullptr);
    jw["end_s"] = w.interval ? json(w.interval->end_s) : json(nullptr);
    arr.push_back(std::move(jw));
  }
  return arr;
}

// File name safe form of a segment id.
inline std::string artifact_name(const std::string& id) {
  std::string s = id;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' || ch == '-')) ch = '_';
  return s;
}

// Time of the first sample of a buffer sliced at t from the file buffer.
inline double aligned_origin(double t, int sr) {
  return static_cast<double>(std::llround(t * sr)) / static_cast<double>(sr);
}

struct SegmentExtras {
  std::optional<double> music_prob;
  std::optional<EnsembleResult> transcript;
  std::optional<std::string> caption;
  std::filesystem::path audio_path;
};

struct ChunkState {
  Chunk chunk;
  Flags flags;
  std::vector<SpeakerSegment> diarized;
  std::vector<SegmentTrack> tracks;
  std::map<std::string, SegmentExtras> extras;
};

}  // namespace pipeline_detail

// Captions `track` with up to two preceding segments as context, passed as
// file references in chronological order. Returns nullopt on failure.
inline std::optional<std::string> caption_with_context(const SegmentTrack& track,
                                                       const std::vector<std::pair<std::filesystem::path, TimeInterval>>& context,
                                                       TaskContext& ctx) {
  nlohmann::json refs = nlohmann::json::array();
  const std::size_t first = context.size() > 2 ? context.size() - 2 : 0;
  for (std::size_t i = first; i < context.size(); ++i)
    refs.push_back({{"path", context[i].first.string()},
                    {"start_s", context[i].second.start_s},
                    {"end_s", context[i].second.end_s}});
  auto resp = ctx.run("caption", ctx.request(TaskKind::kCaption, InlinePcm{track.audio},
                                             {{"context", refs}}, track.segment.interval.start_s));
  if (!resp.ok()) return std::nullopt;
  return resp.get<CaptionResult>().text;
}

struct FileResult {
  std::filesystem::path input;
  std::filesystem::path manifest_path;
  bool ok = false;
  bool skipped = false;
  std::string error;
  double audio_duration_s = 0.0;
  std::map<std::string, double> stage_seconds;
  // Local wall-clock seconds per stage; never written to manifests.
  std::map<std::string, double> wall_seconds;
};

class FileProcessor {
 public:
  FileProcessor(const PipelineConfig& cfg, Dispatcher& dispatcher, std::filesystem::path input,
                std::filesystem::path out_dir)
      : cfg_(cfg), input_(std::move(input)), dir_(std::move(out_dir)),
        ctx_(dispatcher, input_.stem().string()) {}

  // Runs every enabled stage and returns the manifest. Throws on failures
  // that leave nothing usable (unreadable input, silent audio).
  nlohmann::json run(FileResult& result) {
    using namespace pipeline_detail;
    std::filesystem::create_directories(dir_);
    timed(result, "standardize", [&] { standardize(); });
    result.audio_duration_s = audio_.duration_s();
    ctx_.set_source(std::filesystem::absolute(input_).lexically_normal().string(), gain_);

    timed(result, "vad", [&] { make_chunks(); });
    for (auto& cs : chunks_) {
      timed(result, "diarize", [&] { diarize(cs); });
      timed(result, "overlap_resolve", [&] { resolve(cs); });
      if (cfg_.stages.bgm) timed(result, "bgm", [&] { bgm(cs); });
      if (cfg_.stages.denoise) timed(result, "denoise", [&] { denoise(cs); });
      write_segments(cs);
      if (cfg_.stages.asr) timed(result, "asr", [&] { transcribe(cs); });
      if (cfg_.stages.caption) timed(result, "caption", [&] { caption(cs); });
    }
    json regions = json::array();
    if (cfg_.stages.duplex_select)
      timed(result, "duplex_select", [&] { regions = duplex(); });
    result.stage_seconds = ctx_.stage_seconds();
    return manifest(std::move(regions));
  }

 private:
  template <typename F>
  void timed(FileResult& r, const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    r.wall_seconds[stage] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  AudioPayload payload_for(const TimeInterval& iv) const {
    if (iv.duration() > cfg_.inline_max_s) return FileRef{audio_path_abs_.string(), iv};
    return InlinePcm{slice(audio_, iv)};
  }

  TaskRequest request_for(TaskKind kind, const TimeInterval& iv) {
    return ctx_.request(kind, payload_for(iv), nlohmann::json::object(), iv.start_s);
  }

  void standardize() {
    auto raw = read_wav(input_);
    input_rate_ = raw.sample_rate_hz;
    input_channels_ = raw.channel_count;
    auto mono = to_mono(raw);
    if (cfg_.stages.standardize) {
      auto rs = resample(mono, cfg_.sample_rate_hz);
      auto norm = normalize_loudness(rs, cfg_.target_dbfs);
      loudness_ = norm.report;
      gain_ = norm.gain;
      audio_ = quantize(std::move(norm.audio));
      if (loudness_.clipped_sample_count > 0) flags_.insert(flag::kClipped);
    } else {
      loudness_ = measure_dbfs(mono);
      gain_ = 1.0;
      audio_ = quantize(std::move(mono));
    }
    audio_path_abs_ = std::filesystem::absolute(dir_ / "audio.wav");
    write_wav(audio_path_abs_, audio_);
  }

  void make_chunks() {
    const TimeInterval whole{0.0, audio_.duration_s()};
    std::vector<TimeInterval> regions{whole};
    if (cfg_.stages.chunk) {
      auto resp = ctx_.run("vad", request_for(TaskKind::kVad, whole));
      if (resp.ok()) {
        const auto& series = resp.get<VadFrameSeries>();
        // One hop of padding absorbs speech cut by frame quantization.
        std::vector<TimeInterval> padded;
        for (auto r : detect_regions(series, cfg_.vad)) {
          r.start_s = std::max(whole.start_s, r.start_s - series.hop_s);
          r.end_s = std::min(whole.end_s, r.end_s + series.hop_s);
          if (!padded.empty() && r.start_s <= padded.back().end_s) padded.back().end_s = r.end_s;
          else padded.push_back(r);
        }
        regions = std::move(padded);
      } else {
        flags_.insert(flag::kVadFailed);
      }
    }
    for (auto& ch : chunk_regions(regions, cfg_.max_chunk_s)) {
      pipeline_detail::ChunkState cs;
      cs.chunk = ch;
      if (ch.forced_cut) cs.flags.insert(flag::kForcedCut);
      chunks_.push_back(std::move(cs));
    }
    if (!cfg_.stages.chunk) vad_regions_ = {whole};
    else vad_regions_ = regions;
  }

  void diarize(pipeline_detail::ChunkState& cs) {
    std::vector<SpeakerSegment> segs;
    const auto& iv = cs.chunk.interval;
    if (cfg_.stages.diarize) {
      auto resp = ctx_.run("diarize", request_for(TaskKind::kDiarize, iv));
      if (resp.ok()) {
        for (auto s : resp.get<DiarizeResult>().segments) {
          s.interval = {s.interval.start_s + iv.start_s, s.interval.end_s + iv.start_s};
          if (auto x = intersect(s.interval, iv)) {
            s.interval = *x;
            segs.push_back(std::move(s));
          }
        }
      } else {
        cs.flags.insert(flag::kDiarizationFailed);
      }
    } else {
      // Without diarization each speech region in the chunk is one segment
      // of an unknown speaker.
      for (const auto& r : vad_regions_)
        if (auto x = intersect(r, iv)) segs.push_back({"unknown", *x, "", ""});
    }
    std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
      if (a.interval.start_s != b.interval.start_s) return a.interval.start_s < b.interval.start_s;
      if (a.interval.end_s != b.interval.end_s) return a.interval.end_s < b.interval.end_s;
      return a.speaker_id < b.speaker_id;
    });
    for (std::size_t i = 0; i < segs.size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s.s%03zu", cs.chunk.chunk_id.c_str(), i);
      segs[i].chunk_id = cs.chunk.chunk_id;
      segs[i].segment_id = id;
    }
    cs.diarized = std::move(segs);
  }

  void resolve(pipeline_detail::ChunkState& cs) {
    std::map<std::string, SegmentTrack> tracks;
    for (const auto& s : cs.diarized) tracks.emplace(s.segment_id, make_track(s, audio_, 0.0));
    if (cfg_.stages.overlap_resolve) {
      const auto overlaps = find_overlaps(cs.diarized);
      std::map<std::string, ReferenceEmbedding> refs;
      if (cfg_.overlap.mode == OverlapMode::kCase4Separate && !overlaps.empty())
        refs = embed_references(
            collect_references(cs.diarized, overlaps, audio_, 0.0, cfg_.overlap.min_ref_s), ctx_);
      const TimeInterval span{0.0, audio_.duration_s()};
      auto find_ref = [&](const std::string& spk) -> std::optional<ReferenceEmbedding> {
        if (auto it = refs.find(spk); it != refs.end()) return it->second;
        return std::nullopt;
      };
      for (const auto& rel : overlaps) {
        if (rel.overlap.duration() < cfg_.overlap.min_overlap_s) continue;
        auto& ta = tracks.at(rel.seg_a.segment_id);
        auto& tb = tracks.at(rel.seg_b.segment_id);
        if (third_speaker_present(rel, cs.diarized)) {
          ta.flags.insert(flag::kMultiSpeaker);
          tb.flags.insert(flag::kMultiSpeaker);
          continue;
        }
        if (cfg_.overlap.mode == OverlapMode::kCase4Separate)
          separate_overlap(rel, audio_, 0.0, span, cfg_.overlap, find_ref(rel.seg_a.speaker_id),
                           find_ref(rel.seg_b.speaker_id), ctx_, ta, tb);
        else
          apply_cut_policy(cfg_.overlap.mode, rel, ta, tb);
      }
    }
    for (const auto& s : cs.diarized)
      for (auto& piece : finalize_track(tracks.at(s.segment_id), 0.0))
        if (!piece.segment.interval.empty()) cs.tracks.push_back(std::move(piece));
  }

  void bgm(pipeline_detail::ChunkState& cs) {
    std::vector<MusicTag> tags;
    for (auto& t : cs.tracks) {
      auto resp = ctx_.run("bgm", request_for(TaskKind::kTagAudio, t.segment.interval));
      if (!resp.ok()) {
        t.flags.insert(flag::kTaggingFailed);
        continue;
      }
      const double p = resp.get<TagResult>().music_prob;
      cs.extras[t.segment.segment_id].music_prob = p;
      tags.push_back({t.segment.segment_id, p});
    }
    const auto music = flag_music(tags, cfg_.music_threshold);
    std::vector<SpeakerSegment> flagged;
    for (auto& t : cs.tracks)
      if (music.count(t.segment.segment_id)) {
        t.flags.insert(flag::kMusic);
        flagged.push_back(t.segment);
      }
    if (flagged.empty()) return;
    const int sr = audio_.sample_rate_hz;
    for (const auto& w : plan_windows(flagged, cs.chunk.interval, cfg_.windows)) {
      auto resp = ctx_.run("bgm", request_for(TaskKind::kExtractVocals, w.interval));
      for (const auto& m : w.members) {
        auto it = std::find_if(cs.tracks.begin(), cs.tracks.end(),
                               [&](const SegmentTrack& t) { return t.segment.segment_id == m.segment_id; });
        if (it == cs.tracks.end()) continue;
        if (!resp.ok()) {
          it->flags.insert(flag::kVocalExtractionFailed);
          continue;
        }
        // Separated overlap audio is kept; the vocal track still holds both
        // speakers there.
        ExtractionWindow own{w.interval, {}, w.split_extraction};
        for (const auto& piece : subtract(m.interval, it->separated)) own.members.push_back({m.segment_id, piece});
        try {
          it->audio = splice_extracted(it->audio, own, resp.get<AudioResult>().audio,
                                       pipeline_detail::aligned_origin(it->segment.interval.start_s, sr));
          if (w.split_extraction) it->flags.insert(flag::kSplitExtraction);
        } catch (const Error&) {
          it->flags.insert(flag::kVocalExtractionFailed);
        }
      }
    }
  }

  void denoise(pipeline_detail::ChunkState& cs) {
    for (auto& t : cs.tracks) {
      if (t.audio.samples.empty()) continue;
      auto resp = ctx_.run("denoise", ctx_.request(TaskKind::kDenoise, InlinePcm{t.audio}, nlohmann::json::object(),
                                                   t.segment.interval.start_s));
      if (!resp.ok() || resp.get<AudioResult>().audio.samples.size() != t.audio.samples.size()) {
        t.flags.insert(flag::kDenoiseFailed);
        continue;
      }
      t.audio = resp.get<AudioResult>().audio;
    }
  }

  void write_segments(pipeline_detail::ChunkState& cs) {
    std::filesystem::create_directories(dir_ / "segments");
    for (auto& t : cs.tracks) {
      const auto rel = std::filesystem::path("segments") / (pipeline_detail::artifact_name(t.segment.segment_id) + ".wav");
      write_wav(dir_ / rel, t.audio);
      cs.extras[t.segment.segment_id].audio_path = rel;
    }
  }

  void transcribe(pipeline_detail::ChunkState& cs) {
    for (auto& t : cs.tracks) {
      if (t.audio.samples.empty()) continue;
      auto res = ensemble_transcribe(t.audio, t.segment.interval, cfg_.asr, ctx_,
                                     {{"speaker_hint", t.segment.speaker_id}});
      t.flags.insert(res.flags.begin(), res.flags.end());
      cs.extras[t.segment.segment_id].transcript = std::move(res);
    }
  }

  void caption(pipeline_detail::ChunkState& cs) {
    std::vector<std::size_t> order(cs.tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cs.tracks[a].segment.interval.start_s < cs.tracks[b].segment.interval.start_s;
    });
    std::vector<std::pair<std::filesystem::path, TimeInterval>> history;
    for (auto i : order) {
      auto& t = cs.tracks[i];
      if (t.audio.samples.empty()) continue;
      auto text = caption_with_context(t, history, ctx_);
      if (text) cs.extras[t.segment.segment_id].caption = *text;
      else t.flags.insert(flag::kCaptionFailed);
      history.emplace_back(std::filesystem::absolute(dir_ / cs.extras[t.segment.segment_id].audio_path),
                           t.segment.interval);
    }
  }

  nlohmann::json duplex() {
    using nlohmann::json;
    json out = json::array();
    std::filesystem::create_directories(dir_ / "duplex");
    for (auto& cs : chunks_) {
      std::vector<SegmentTrack> eligible;
      for (const auto& t : cs.tracks)
        if (!t.flags.count(flag::kMultiSpeaker)) eligible.push_back(t);
      std::map<std::string, std::vector<WordToken>> words;
      for (const auto& [id, ex] : cs.extras)
        if (ex.transcript) words[id] = ex.transcript->words;
      const auto regions = select_regions(turns_from_tracks(eligible), cfg_.duplex);
      for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& region = regions[r];
        char rid[48];
        std::snprintf(rid, sizeof rid, "%s.r%02zu", cs.chunk.chunk_id.c_str(), r);
        json jr{{"region_id", rid}, {"chunk_id", cs.chunk.chunk_id},
                {"start_s", region.interval.start_s}, {"end_s", region.interval.end_s},
                {"left_speaker", region.left_speaker_id}};
        json turns = json::array();
        for (const auto& t : region.turns) turns.push_back(t.segment_id);
        jr["turns"] = turns;
        auto built = build_stereo(region, eligible, words, 0.0, audio_.sample_rate_hz);
        std::string right;
        for (const auto& s : region.speakers())
          if (s != region.left_speaker_id) right = s;
        jr["right_speaker"] = right;
        jr["dropped"] = !built.sample.has_value();
        if (built.sample) {
          const auto rel = std::filesystem::path("duplex") / (std::string(rid) + ".wav");
          write_wav(dir_ / rel, built.sample->interleaved());
          jr["audio"] = rel.string();
          jr["left_words"] = pipeline_detail::words_json(built.sample->left_words);
          jr["right_words"] = pipeline_detail::words_json(built.sample->right_words);
        } else {
          flags_.insert(flag::kRegionDropped);
        }
        out.push_back(std::move(jr));
      }
    }
    return out;
  }

  nlohmann::json manifest(nlohmann::json regions) {
    using nlohmann::json;
    using pipeline_detail::flags_json;
    json m;
    m["schema_version"] = kManifestSchemaVersion;
    m["status"] = "complete";
    m["source"] = {{"path", input_.generic_string()},
                   {"duration_s", audio_.duration_s()},
                   {"sample_rate_hz", input_rate_},
                   {"channels", input_channels_},
                   {"standardized_audio", "audio.wav"},
                   {"loudness",
                    {{"input_dbfs", loudness_.dbfs},
                     {"gain", gain_},
                     {"clipped_samples", loudness_.clipped_sample_count}}}};
    m["params"] = params_json(cfg_);
    m["flags"] = flags_json(flags_);
    json chunks = json::array();
    for (const auto& cs : chunks_) {
      json jc{{"chunk_id", cs.chunk.chunk_id}, {"start_s", cs.chunk.interval.start_s},
              {"end_s", cs.chunk.interval.end_s}, {"forced_cut", cs.chunk.forced_cut},
              {"flags", flags_json(cs.flags)}};
      json segs = json::array();
      for (const auto& t : cs.tracks) {
        const auto it = cs.extras.find(t.segment.segment_id);
        const pipeline_detail::SegmentExtras ex = it == cs.extras.end() ? pipeline_detail::SegmentExtras{} : it->second;
        json js{{"segment_id", t.segment.segment_id}, {"speaker_id", t.segment.speaker_id},
                {"start_s", t.segment.interval.start_s}, {"end_s", t.segment.interval.end_s},
                {"audio", ex.audio_path.generic_string()}, {"flags", flags_json(t.flags)}};
        json sep = json::array();
        for (const auto& s : t.separated) sep.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}});
        js["separated"] = sep;
        js["music_prob"] = ex.music_prob ? json(*ex.music_prob) : json(nullptr);
        if (ex.transcript) {
          const auto& tr = *ex.transcript;
          std::string text;
          for (const auto& w : tr.words) text += (text.empty() ? "" : " ") + w.surface;
          json rep{{"n", tr.report.n}, {"max_count", tr.report.max_count},
                   {"discarded", tr.report.discarded}};
          rep["offending_ngram"] = tr.report.offending_ngram ? json(*tr.report.offending_ngram) : json(nullptr);
          js["transcript"] = {{"text", text}, {"words", pipeline_detail::words_json(tr.words)},
                              {"primary_model", tr.primary_used}, {"repetition", rep}};
        } else {
          js["transcript"] = nullptr;
        }
        js["caption"] = ex.caption ? json(*ex.caption) : json(nullptr);
        segs.push_back(std::move(js));
      }
      jc["segments"] = segs;
      chunks.push_back(std::move(jc));
    }
    m["chunks"] = chunks;
    m["duplex_regions"] = std::move(regions);
    m["stage_timings"] = ctx_.stage_seconds();
    json req = json::object();
    for (const auto& [k, n] : ctx_.requested()) req[to_string(k)] = n;
    m["requests"] = req;
    return m;
  }

  const PipelineConfig& cfg_;
  std::filesystem::path input_;
  std::filesystem::path dir_;
  TaskContext ctx_;
  AudioBuffer audio_;
  std::filesystem::path audio_path_abs_;
  LoudnessReport loudness_;
  double gain_ = 1.0;
  int input_rate_ = 0;
  int input_channels_ = 0;
  Flags flags_;
  std::vector<TimeInterval> vad_regions_;
  std::vector<pipeline_detail::ChunkState> chunks_;
};

// ---------------------------------------------------------------------------
// Run over all inputs

struct RunSummary {
  std::vector<FileResult> files;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  double audio_duration_s = 0.0;
  std::map<std::string, double> stage_seconds;
  std::map<std::string, double> wall_seconds;
  std::optional<metrics::RtfReport> rtf;

  int exit_code() const { return failed > 0 ? 1 : 0; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["files"] = files.size();
    j["failed"] = failed;
    j["skipped"] = skipped;
    j["audio_duration_s"] = audio_duration_s;
    j["stage_seconds"] = stage_seconds;
    j["wall_seconds"] = wall_seconds;
    if (rtf) {
      nlohmann::json stages = nlohmann::json::array();
      for (const auto& s : rtf->stages)
        stages.push_back({{"name", s.name}, {"processing_s", s.processing_s}, {"rtf", s.rtf}});
      j["rtf"] = {{"stages", stages}, {"total_processing_s", rtf->total_processing_s},
                  {"total_rtf", rtf->total_rtf}};
    }
    nlohmann::json per = nlohmann::json::array();
    for (const auto& f : files) {
      nlohmann::json e{{"input", f.input.generic_string()}, {"ok", f.ok}, {"skipped", f.skipped}};
      if (!f.error.empty()) e["error"] = f.error;
      per.push_back(std::move(e));
    }
    j["per_file"] = per;
    return j;
  }
};

// Directory inputs expand to their *.wav files (non-recursive), sorted.
inline std::vector<std::filesystem::path> expand_inputs(const std::vector<std::filesystem::path>& in) {
  std::vector<std::filesystem::path> out;
  for (const auto& p : in) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".wav") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  std::set<std::string> stems;
  for (const auto& p : out)
    if (!stems.insert(p.stem().string()).second)
      throw Error(ErrorCode::kConfig, "two inputs share the name " + p.stem().string());
  return out;
}

inline FileResult process_file(const PipelineConfig& cfg, Dispatcher& dispatcher,
                               const std::filesystem::path& input) {
  FileResult r;
  r.input = input;
  const auto dir = cfg.output_dir / input.stem();
  r.manifest_path = dir / kManifestFile;
  if (cfg.resume) {
    const auto probe = probe_manifest(r.manifest_path);
    if (probe.state == ManifestState::kWrongSchema)
      throw Error(ErrorCode::kSchema, r.manifest_path.string() + ": " + probe.detail +
                                          ", expected " + std::to_string(kManifestSchemaVersion));
    if (probe.state == ManifestState::kComplete) {
      r.ok = true;
      r.skipped = true;
      const auto& m = *probe.manifest;
      r.audio_duration_s = m.at("source").value("duration_s", 0.0);
      if (m.contains("stage_timings"))
        for (const auto& [k, v] : m["stage_timings"].items()) r.stage_seconds[k] = v.get<double>();
      return r;
    }
    if (probe.state == ManifestState::kCorrupt)
      std::fprintf(stderr, "warning: %s is corrupt (%s); reprocessing\n", r.manifest_path.string().c_str(),
                   probe.detail.c_str());
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  try {
    FileProcessor fp(cfg, dispatcher, input, dir);
    const auto m = fp.run(r);
    write_atomic(r.manifest_path, dump_manifest(m));
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    nlohmann::json m{{"schema_version", kManifestSchemaVersion}, {"status", "failed"},
                     {"error", r.error}, {"source", {{"path", input.generic_string()}}}};
    write_atomic(r.manifest_path, dump_manifest(m));
  }
  return r;
}

// Processes all inputs with worker_count file-level workers. Schema
// mismatches in existing manifests abort with a config-class error before
// any work starts.
inline RunSummary run_pipeline(const PipelineConfig& cfg, Dispatcher& dispatcher) {
  const auto inputs = expand_inputs(cfg.inputs);
  if (cfg.resume)
    for (const auto& in : inputs) {
      const auto path = cfg.output_dir / in.stem() / kManifestFile;
      const auto probe = probe_manifest(path);
      if (probe.state == ManifestState::kWrongSchema)
        throw Error(ErrorCode::kSchema, path.string() + ": " + probe.detail + ", expected " +
                                            std::to_string(kManifestSchemaVersion));
    }
  check_capabilities(cfg, dispatcher);
  std::filesystem::create_directories(cfg.output_dir);

  RunSummary sum;
  sum.files.resize(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= inputs.size()) return;
      sum.files[i] = process_file(cfg, dispatcher, inputs[i]);
    }
  };
  std::vector<std::thread> pool;
  const auto n = std::min(cfg.worker_count, std::max<std::size_t>(inputs.size(), 1));
  for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (const auto& f : sum.files) {
    if (!f.ok) ++sum.failed;
    if (f.skipped) ++sum.skipped;
    if (!f.ok) continue;
    sum.audio_duration_s += f.audio_duration_s;
    for (const auto& [k, v] : f.stage_seconds) sum.stage_seconds[k] += v;
    for (const auto& [k, v] : f.wall_seconds) sum.wall_seconds[k] += v;
  }
  if (sum.audio_duration_s > 0.0) {
    std::vector<metrics::StageTiming> st;
    for (const auto& [k, v] : sum.stage_seconds) st.push_back({k, v});
    sum.rtf = metrics::rtf_report(st, sum.audio_duration_s);
  }
  write_atomic(cfg.output_dir / "summary.json", sum.to_json().dump(2) + "\n");
  return sum;
}

}  // namespace convcurate
