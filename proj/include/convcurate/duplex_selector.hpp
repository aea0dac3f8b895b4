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

// Selection of two-speaker regions for full-duplex training and their
// rendering as left/right stereo streams.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "convcurate/asr_ensemble.hpp"
#include "convcurate/audio.hpp"
#include "convcurate/flags.hpp"
#include "convcurate/overlap_resolver.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

struct DuplexOptions {
  double max_turn_s = 10.0;
  std::size_t min_turns = 3;
  // Turns further apart than this are not consecutive.
  double max_gap_s = 10.0;
};

struct DuplexTurn {
  Turn turn;
  std::string segment_id;
};

struct ValidRegion {
  std::vector<DuplexTurn> turns;
  TimeInterval interval;
  std::string left_speaker_id;
  std::size_t first_turn_index = 0;

  std::set<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto& t : turns) s.insert(t.turn.speaker_id);
    return s;
  }
};

// Left channel goes to the speaker with more speech in the region; ties go
// to the lexicographically smaller id.
inline std::string pick_left_speaker(const std::vector<DuplexTurn>& turns) {
  std::map<std::string, double> talk;
  for (const auto& t : turns) talk[t.turn.speaker_id] += t.turn.interval.duration();
  std::string best;
  double best_d = -1.0;
  for (const auto& [spk, d] : talk)
    if (d > best_d) {
      best = spk;
      best_d = d;
    }
  return best;
}

// Walks the turns in order, growing a run until a turn is too long (the
// run ends and the turn is dropped), the gap to the previous turn is too
// large, or a third speaker appears (a new run starts at that turn). Runs
// with at least min_turns turns and exactly two speakers become regions.
inline std::vector<ValidRegion> select_regions(const std::vector<DuplexTurn>& turns,
                                               const DuplexOptions& opt = {}) {
  std::vector<ValidRegion> regions;
  std::vector<DuplexTurn> run;
  std::size_t run_start = 0;
  std::set<std::string> speakers;

  auto flush = [&] {
    if (run.size() >= opt.min_turns && speakers.size() == 2) {
      ValidRegion r;
      r.turns = run;
      r.first_turn_index = run_start;
      r.interval = run.front().turn.interval;
      for (const auto& t : run) r.interval.end_s = std::max(r.interval.end_s, t.turn.interval.end_s);
      r.left_speaker_id = pick_left_speaker(run);
      regions.push_back(std::move(r));
    }
    run.clear();
    speakers.clear();
  };

  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& t = turns[i];
    if (t.turn.interval.duration() > opt.max_turn_s) {
      flush();
      continue;
    }
    if (!run.empty() && t.turn.interval.start_s - run.back().turn.interval.end_s > opt.max_gap_s)
      flush();
    if (!run.empty() && speakers.size() == 2 && !speakers.count(t.turn.speaker_id)) flush();
    if (run.empty()) run_start = i;
    run.push_back(t);
    speakers.insert(t.turn.speaker_id);
  }
  flush();
  return regions;
}

inline std::vector<ValidRegion> select_regions(const std::vector<Turn>& turns,
                                               const DuplexOptions& opt = {}) {
  std::vector<DuplexTurn> wrapped;
  wrapped.reserve(turns.size());
  for (const auto& t : turns) wrapped.push_back({t, {}});
  return select_regions(wrapped, opt);
}

inline std::vector<DuplexTurn> turns_from_tracks(const std::vector<SegmentTrack>& tracks) {
  std::vector<DuplexTurn> turns;
  for (const auto& t : tracks)
    turns.push_back({{t.segment.speaker_id, t.segment.interval, {}}, t.segment.segment_id});
  std::stable_sort(turns.begin(), turns.end(), [](const DuplexTurn& a, const DuplexTurn& b) {
    return a.turn.interval.start_s < b.turn.interval.start_s;
  });
  return turns;
}

struct StereoSample {
  AudioBuffer left;
  AudioBuffer right;
  std::vector<WordToken> left_words;
  std::vector<WordToken> right_words;
  TimeInterval interval;
  std::string left_speaker_id;
  std::string right_speaker_id;

  // Interleaved two-channel buffer, left first.
  AudioBuffer interleaved() const {
    AudioBuffer out{{}, left.sample_rate_hz, 2};
    out.samples.resize(left.samples.size() * 2);
    for (std::size_t i = 0; i < left.samples.size(); ++i) {
      out.samples[2 * i] = left.samples[i];
      out.samples[2 * i + 1] = right.samples[i];
    }
    return out;
  }
};

struct StereoBuild {
  std::optional<StereoSample> sample;
  Flags flags;
};

// Places each region segment's single-speaker audio at its timeline
// position on its speaker's channel; silence elsewhere. `words` maps a
// segment id to its words (absolute times).
inline StereoBuild build_stereo(const ValidRegion& region, const std::vector<SegmentTrack>& tracks,
                                const std::map<std::string, std::vector<WordToken>>& words,
                                double origin_s, int sample_rate_hz) {
  StereoBuild out;
  const auto spk = region.speakers();
  if (spk.size() != 2 || !spk.count(region.left_speaker_id)) {
    out.flags.insert(flag::kRegionDropped);
    return out;
  }
  std::set<std::string> ids;
  for (const auto& t : region.turns) ids.insert(t.segment_id);

  StereoSample s;
  s.interval = region.interval;
  s.left_speaker_id = region.left_speaker_id;
  for (const auto& id : spk)
    if (id != region.left_speaker_id) s.right_speaker_id = id;
  const auto r0 = sample_index(region.interval.start_s, origin_s, sample_rate_hz);
  const auto r1 = sample_index(region.interval.end_s, origin_s, sample_rate_hz);
  const auto len = static_cast<std::size_t>(std::max<std::int64_t>(r1 - r0, 0));
  s.left = AudioBuffer{std::vector<double>(len, 0.0), sample_rate_hz, 1};
  s.right = AudioBuffer{std::vector<double>(len, 0.0), sample_rate_hz, 1};

  for (const auto& track : tracks) {
    if (!ids.count(track.segment.segment_id)) continue;
    if (track.flags.count(flag::kSeparationFailed) || track.flags.count(flag::kMultiSpeaker)) {
      out.flags.insert(flag::kRegionDropped);
      return out;
    }
    const bool left = track.segment.speaker_id == region.left_speaker_id;
    auto& chan = left ? s.left.samples : s.right.samples;
    const auto t0 = sample_index(track.segment.interval.start_s, origin_s, sample_rate_hz);
    for (std::size_t k = 0; k < track.audio.samples.size(); ++k) {
      const auto pos = t0 + static_cast<std::int64_t>(k) - r0;
      if (pos < 0 || pos >= static_cast<std::int64_t>(len)) continue;
      chan[static_cast<std::size_t>(pos)] += track.audio.samples[k];
    }
    if (auto it = words.find(track.segment.segment_id); it != words.end()) {
      auto& dst = left ? s.left_words : s.right_words;
      dst.insert(dst.end(), it->second.begin(), it->second.end());
    }
  }
  auto by_time = [](const WordToken& a, const WordToken& b) {
    const double ta = a.interval ? a.interval->start_s : 0.0;
    const double tb = b.interval ? b.interval->start_s : 0.0;
    return ta < tb;
  };
  std::stable_sort(s.left_words.begin(), s.left_words.end(), by_time);
  std::stable_sort(s.right_words.begin(), s.right_words.end(), by_time);
  out.sample = std::move(s);
  return out;
}

}  // namespace convcurate
