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

// Per-source manifest: schema version, atomic persistence and validation.
// The layout is documented in docs/manifest.schema.json.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "convcurate/error.hpp"
#include "convcurate/flags.hpp"

namespace convcurate {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

inline const std::set<std::string>& known_flags() {
  static const std::set<std::string> flags = {
      flag::kClipped,           flag::kForcedCut,         flag::kNoReference,
      flag::kSeparationFailed,  flag::kEmbeddingFailed,   flag::kMultiSpeaker,
      flag::kAssignmentTie,     flag::kJointAssignment,   flag::kSeparated,
      flag::kMusic,             flag::kSplitExtraction,   flag::kVocalExtractionFailed,
      flag::kTaggingFailed,     flag::kDenoiseFailed,     flag::kDegradedEnsemble,
      flag::kPrimaryPromoted,   flag::kAsrFailed,         flag::kInterpolatedAll,
      flag::kRepetitionDiscarded, flag::kHypothesisLooped, flag::kCaptionFailed,
      flag::kDiarizationFailed, flag::kVadFailed,         flag::kRegionDropped,
      flag::kTaggedAtSegment};
  return flags;
}

inline std::string dump_manifest(const nlohmann::json& m) { return m.dump(2) + "\n"; }

// Writes to a sibling temp file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

enum class ManifestState { kMissing, kCorrupt, kFailed, kComplete, kWrongSchema };

struct ManifestProbe {
  ManifestState state = ManifestState::kMissing;
  std::optional<nlohmann::json> manifest;
  std::string detail;
};

inline ManifestProbe probe_manifest(const std::filesystem::path& path) {
  ManifestProbe p;
  std::ifstream in(path);
  if (!in) return p;
  try {
    p.manifest = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    p.state = ManifestState::kCorrupt;
    p.detail = e.what();
    p.manifest.reset();
    return p;
  }
  const auto& m = *p.manifest;
  if (!m.is_object() || !m.contains("schema_version") || !m["schema_version"].is_number_integer()) {
    p.state = ManifestState::kCorrupt;
    p.detail = "no schema_version";
    return p;
  }
  if (m["schema_version"].get<int>() != kManifestSchemaVersion) {
    p.state = ManifestState::kWrongSchema;
    p.detail = "schema_version " + std::to_string(m["schema_version"].get<int>());
    return p;
  }
  p.state = m.value("status", "") == "complete" ? ManifestState::kComplete : ManifestState::kFailed;
  return p;
}

// Structural validation of a complete or failed manifest. Relative artifact
// paths are resolved against `dir` and must exist. Returns one message per
// problem; empty means valid.
inline std::vector<std::string> validate_manifest(const nlohmann::json& m,
                                                  const std::filesystem::path& dir) {
  using nlohmann::json;
  std::vector<std::string> errs;
  auto fail = [&](const std::string& where, const std::string& what) {
    errs.push_back(where + ": " + what);
  };
  auto need = [&](const json& obj, const std::string& where, const char* key,
                  json::value_t type) -> const json* {
    if (!obj.is_object() || !obj.contains(key)) {
      fail(where, std::string("missing '") + key + "'");
      return nullptr;
    }
    const auto& v = obj[key];
    const bool ok = v.type() == type ||
                    (type == json::value_t::number_float && v.is_number()) ||
                    (type == json::value_t::number_unsigned && v.is_number_integer() && v.get<long long>() >= 0);
    if (!ok) {
      fail(where + "/" + key, std::string("expected ") + json(type).type_name());
      return nullptr;
    }
    return &v;
  };
  auto check_interval = [&](const json& obj, const std::string& where) {
    const auto* s = need(obj, where, "start_s", json::value_t::number_float);
    const auto* e = need(obj, where, "end_s", json::value_t::number_float);
    if (s && e && !(s->get<double>() <= e->get<double>())) fail(where, "start_s > end_s");
  };
  auto check_flags = [&](const json& obj, const std::string& where) {
    const auto* f = need(obj, where, "flags", json::value_t::array);
    if (!f) return;
    for (const auto& x : *f)
      if (!x.is_string() || !known_flags().count(x.get<std::string>()))
        fail(where + "/flags", "unknown flag " + x.dump());
  };
  auto check_file = [&](const json& v, const std::string& where) {
    if (!v.is_string()) {
      fail(where, "expected a path");
      return;
    }
    if (!std::filesystem::exists(dir / v.get<std::string>()))
      fail(where, "missing artifact " + v.get<std::string>());
  };
  auto check_words = [&](const json& words, const std::string& where) {
    if (!words.is_array()) {
      fail(where, "expected array");
      return;
    }
    double last_end = -1e300;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto w = where + "/" + std::to_string(i);
      need(words[i], w, "word", json::value_t::string);
      check_interval(words[i], w);
      if (words[i].contains("start_s") && words[i]["start_s"].is_number()) {
        if (words[i]["start_s"].get<double>() < last_end - 1e-9) fail(w, "words not monotone");
        if (words[i].contains("end_s") && words[i]["end_s"].is_number())
          last_end = words[i]["end_s"].get<double>();
      }
    }
  };

  if (!m.is_object()) return {"manifest is not an object"};
  static const std::set<std::string> kTopLevel = {"chunks", "duplex_regions", "error", "flags", "params",
                                                  "requests", "schema_version", "source", "stage_timings", "status"};
  for (const auto& [k, v] : m.items())
    if (!kTopLevel.count(k)) fail("", "unexpected key '" + k + "'");
  const auto* ver = need(m, "", "schema_version", json::value_t::number_unsigned);
  if (ver && ver->get<int>() != kManifestSchemaVersion) fail("/schema_version", "unsupported version");
  const auto* status = need(m, "", "status", json::value_t::string);
  const auto* source = need(m, "", "source", json::value_t::object);
  if (source) need(*source, "/source", "path", json::value_t::string);
  if (status && status->get<std::string>() == "failed") {
    need(m, "", "error", json::value_t::string);
    return errs;
  }
  if (status && status->get<std::string>() != "complete") fail("/status", "unknown status");
  if (source) {
    need(*source, "/source", "duration_s", json::value_t::number_float);
    need(*source, "/source", "sample_rate_hz", json::value_t::number_unsigned);
    need(*source, "/source", "channels", json::value_t::number_unsigned);
    if (const auto* a = need(*source, "/source", "standardized_audio", json::value_t::string))
      check_file(*a, "/source/standardized_audio");
    if (const auto* l = need(*source, "/source", "loudness", json::value_t::object)) {
      need(*l, "/source/loudness", "input_dbfs", json::value_t::number_float);
      need(*l, "/source/loudness", "gain", json::value_t::number_float);
      need(*l, "/source/loudness", "clipped_samples", json::value_t::number_unsigned);
    }
  }
  need(m, "", "params", json::value_t::object);
  check_flags(m, "");
  need(m, "", "stage_timings", json::value_t::object);
  need(m, "", "requests", json::value_t::object);

  std::set<std::string> segment_ids;
  if (const auto* chunks = need(m, "", "chunks", json::value_t::array)) {
    for (std::size_t c = 0; c < chunks->size(); ++c) {
      const auto& ch = (*chunks)[c];
      const auto cw = "/chunks/" + std::to_string(c);
      need(ch, cw, "chunk_id", json::value_t::string);
      check_interval(ch, cw);
      need(ch, cw, "forced_cut", json::value_t::boolean);
      check_flags(ch, cw);
      const auto* segs = need(ch, cw, "segments", json::value_t::array);
      if (!segs) continue;
      for (std::size_t s = 0; s < segs->size(); ++s) {
        const auto& sg = (*segs)[s];
        const auto sw = cw + "/segments/" + std::to_string(s);
        if (const auto* id = need(sg, sw, "segment_id", json::value_t::string))
          if (!segment_ids.insert(id->get<std::string>()).second) fail(sw, "duplicate segment_id");
        need(sg, sw, "speaker_id", json::value_t::string);
        check_interval(sg, sw);
        if (ch.contains("start_s") && ch.contains("end_s") && ch["start_s"].is_number() && ch["end_s"].is_number() &&
            sg.contains("start_s") && sg.contains("end_s") &&
            sg["start_s"].is_number() && sg["end_s"].is_number() &&
            (sg["start_s"].get<double>() < ch["start_s"].get<double>() - 1e-6 ||
             sg["end_s"].get<double>() > ch["end_s"].get<double>() + 1e-6))
          fail(sw, "segment outside its chunk");
        check_flags(sg, sw);
        if (sg.contains("audio")) check_file(sg["audio"], sw + "/audio");
        else fail(sw, "missing 'audio'");
        if (const auto* sep = need(sg, sw, "separated", json::value_t::array))
          for (std::size_t k = 0; k < sep->size(); ++k) check_interval((*sep)[k], sw + "/separated/" + std::to_string(k));
        if (!sg.contains("music_prob")) fail(sw, "missing 'music_prob'");
        else if (!sg["music_prob"].is_null() &&
                 !(sg["music_prob"].is_number() && sg["music_prob"].get<double>() >= 0.0 &&
                   sg["music_prob"].get<double>() <= 1.0))
          fail(sw + "/music_prob", "expected null or a probability");
        if (!sg.contains("transcript")) {
          fail(sw, "missing 'transcript'");
        } else if (!sg["transcript"].is_null()) {
          const auto& t = sg["transcript"];
          const auto tw = sw + "/transcript";
          need(t, tw, "text", json::value_t::string);
          need(t, tw, "primary_model", json::value_t::string);
          if (t.contains("words")) check_words(t["words"], tw + "/words");
          else fail(tw, "missing 'words'");
          if (const auto* r = need(t, tw, "repetition", json::value_t::object)) {
            need(*r, tw + "/repetition", "n", json::value_t::number_unsigned);
            need(*r, tw + "/repetition", "max_count", json::value_t::number_unsigned);
            need(*r, tw + "/repetition", "discarded", json::value_t::boolean);
            if (!r->contains("offending_ngram")) fail(tw + "/repetition", "missing 'offending_ngram'");
          }
        }
        if (!sg.contains("caption")) fail(sw, "missing 'caption'");
        else if (!sg["caption"].is_null() && !sg["caption"].is_string())
          fail(sw + "/caption", "expected null or string");
      }
    }
  }
  if (const auto* regions = need(m, "", "duplex_regions", json::value_t::array)) {
    for (std::size_t r = 0; r < regions->size(); ++r) {
      const auto& rg = (*regions)[r];
      const auto rw = "/duplex_regions/" + std::to_string(r);
      need(rg, rw, "region_id", json::value_t::string);
      need(rg, rw, "chunk_id", json::value_t::string);
      check_interval(rg, rw);
      need(rg, rw, "left_speaker", json::value_t::string);
      need(rg, rw, "right_speaker", json::value_t::string);
      const auto* dropped = need(rg, rw, "dropped", json::value_t::boolean);
      if (const auto* turns = need(rg, rw, "turns", json::value_t::array))
        for (const auto& t : *turns)
          if (!t.is_string() || !segment_ids.count(t.get<std::string>()))
            fail(rw + "/turns", "unknown segment " + t.dump());
      if (dropped && !dropped->get<bool>()) {
        if (rg.contains("audio")) check_file(rg["audio"], rw + "/audio");
        else fail(rw, "missing 'audio'");
        if (rg.contains("left_words")) check_words(rg["left_words"], rw + "/left_words");
        if (rg.contains("right_words")) check_words(rg["right_words"], rw + "/right_words");
      }
    }
  }
  return errs;
}

}  // namespace convcurate
