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

// Background-music gating and windowed vocal extraction planning.

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

inline constexpr double kDefaultMusicThreshold = 0.3;
inline constexpr double kDefaultExtractionWindowS = 120.0;
inline constexpr double kDefaultWindowLeadS = 30.0;

struct MusicTag {
  std::string segment_id;
  double music_prob = 0.0;
};

struct WindowMember {
  std::string segment_id;
  TimeInterval interval;
};

struct ExtractionWindow {
  TimeInterval interval;
  std::vector<WindowMember> members;
  // Set when a member is longer than the window and is covered by
  // abutting windows.
  bool split_extraction = false;

  std::vector<std::string> member_segment_ids() const {
    std::vector<std::string> ids;
    for (const auto& m : members) ids.push_back(m.segment_id);
    return ids;
  }
};

// Strictly above the threshold.
inline std::set<std::string> flag_music(const std::vector<MusicTag>& tags,
                                        double threshold = kDefaultMusicThreshold) {
  std::set<std::string> out;
  for (const auto& t : tags) {
    if (t.music_prob < 0.0 || t.music_prob > 1.0)
      throw Error(ErrorCode::kInvalidArgument, "music probability out of range");
    if (t.music_prob > threshold) out.insert(t.segment_id);
  }
  return out;
}

struct WindowOptions {
  double window_s = kDefaultExtractionWindowS;
  double lead_s = kDefaultWindowLeadS;
};

// Greedy left-to-right packing: each window opens at the first uncovered
// segment and takes every following segment that ends within window_s,
// which yields the minimum number of windows. The window is then shifted
// left by up to lead_s (never uncovering its members) for context, and
// clipped to the chunk.
inline std::vector<ExtractionWindow> plan_windows(std::vector<SpeakerSegment> flagged,
                                                  const TimeInterval& chunk,
                                                  const WindowOptions& opt = {}) {
  if (!(opt.window_s > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "window_s must be positive");
  std::stable_sort(flagged.begin(), flagged.end(), [](const auto& x, const auto& y) {
    return x.interval.start_s < y.interval.start_s;
  });
  std::vector<ExtractionWindow> windows;
  std::size_t i = 0;
  while (i < flagged.size()) {
    const auto& first = flagged[i];
    const auto seg = first.interval;
    if (seg.duration() > opt.window_s) {
      // Abutting windows over a long segment; each window lists it.
      double t = seg.start_s;
      while (t < seg.end_s) {
        ExtractionWindow w;
        w.interval = {t, std::min(t + opt.window_s, seg.end_s)};
        w.members.push_back({first.segment_id, seg});
        w.split_extraction = true;
        windows.push_back(std::move(w));
        t += opt.window_s;
      }
      ++i;
      continue;
    }
    ExtractionWindow w;
    const double open = seg.start_s;
    double group_end = seg.end_s;
    while (i < flagged.size() && flagged[i].interval.duration() <= opt.window_s &&
           flagged[i].interval.end_s <= open + opt.window_s) {
      w.members.push_back({flagged[i].segment_id, flagged[i].interval});
      group_end = std::max(group_end, flagged[i].interval.end_s);
      ++i;
    }
    const double slack = opt.window_s - (group_end - open);
    double start = std::max(chunk.start_s, open - std::min(opt.lead_s, slack));
    double end = std::min(chunk.end_s, start + opt.window_s);
    if (end - start < opt.window_s) start = std::max(chunk.start_s, end - opt.window_s);
    w.interval = {start, end};
    windows.push_back(std::move(w));
  }
  return windows;
}

// Replaces exactly the member segments' sample ranges of `original` (which
// starts at origin_s) with the corresponding samples of `vocal`, which
// covers the window.
inline AudioBuffer splice_extracted(const AudioBuffer& original, const ExtractionWindow& window,
                                    const AudioBuffer& vocal, double origin_s = 0.0) {
  const int sr = original.sample_rate_hz;
  if (vocal.sample_rate_hz != sr)
    throw Error(ErrorCode::kLengthMismatch, "vocal track sample rate differs");
  const auto w0 = sample_index(window.interval.start_s, origin_s, sr);
  const auto w1 = sample_index(window.interval.end_s, origin_s, sr);
  const auto expected = w1 - w0;
  const auto got = static_cast<std::int64_t>(vocal.samples.size());
  if (std::llabs(got - expected) > 1)
    throw Error(ErrorCode::kLengthMismatch,
                "vocal track has " + std::to_string(got) + " samples, window needs " +
                    std::to_string(expected));
  AudioBuffer out = original;
  const auto n = static_cast<std::int64_t>(out.samples.size());
  for (const auto& m : window.members) {
    const auto clipped = intersect(m.interval, window.interval);
    if (!clipped) continue;
    const auto lo = std::max<std::int64_t>(sample_index(clipped->start_s, origin_s, sr), 0);
    const auto hi = std::min(sample_index(clipped->end_s, origin_s, sr), n);
    for (auto k = lo; k < hi; ++k) {
      const auto v = k - w0;
      if (v >= 0 && v < got)
        out.samples[static_cast<std::size_t>(k)] = vocal.samples[static_cast<std::size_t>(v)];
    }
  }
  return out;
}

}  // namespace convcurate
