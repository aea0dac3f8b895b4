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

// Splits long recordings into chunks shorter than max_chunk_s, cutting only
// inside VAD-detected silence.

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

struct VadFrameSeries {
  double hop_s = 0.01;
  std::vector<double> probs;

  double duration_s() const { return hop_s * static_cast<double>(probs.size()); }
};

struct VadOptions {
  double on_thresh = 0.5;
  double off_thresh = 0.35;
  double min_silence_s = 0.3;
  double min_speech_s = 0.2;
};

struct Chunk {
  std::string chunk_id;
  TimeInterval interval;
  // True when the chunk's end was cut inside speech because a single region
  // reached max_chunk_s.
  bool forced_cut = false;
};

inline constexpr double kDefaultMaxChunkS = 300.0;

// Hysteresis segmentation: speech starts at a frame with prob >= on_thresh
// and ends once prob stays below off_thresh for min_silence_s.
inline std::vector<TimeInterval> detect_regions(const VadFrameSeries& vad,
                                                const VadOptions& opt = {}) {
  if (!(vad.hop_s > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "hop_s must be positive");
  if (opt.on_thresh < opt.off_thresh)
    throw Error(ErrorCode::kInvalidArgument, "on_thresh must be >= off_thresh");
  const auto min_silence_frames = static_cast<std::size_t>(
      std::max(1.0, std::ceil(opt.min_silence_s / vad.hop_s - 1e-9)));

  std::vector<TimeInterval> regions;
  auto emit = [&](std::size_t begin, std::size_t end) {
    TimeInterval r{static_cast<double>(begin) * vad.hop_s,
                   static_cast<double>(end) * vad.hop_s};
    if (r.duration() + 1e-9 >= opt.min_speech_s && !r.empty())
      regions.push_back(r);
  };

  bool in_speech = false;
  std::size_t speech_begin = 0;
  std::size_t silence_begin = 0;
  std::size_t silence_run = 0;
  for (std::size_t i = 0; i < vad.probs.size(); ++i) {
    const double p = vad.probs[i];
    if (!in_speech) {
      if (p >= opt.on_thresh) {
        in_speech = true;
        speech_begin = i;
        silence_run = 0;
      }
      continue;
    }
    if (p < opt.off_thresh) {
      if (silence_run == 0) silence_begin = i;
      if (++silence_run >= min_silence_frames) {
        emit(speech_begin, silence_begin);
        in_speech = false;
        silence_run = 0;
      }
    } else {
      silence_run = 0;
    }
  }
  if (in_speech)
    emit(speech_begin, silence_run > 0 ? silence_begin : vad.probs.size());
  return regions;
}

inline std::string make_chunk_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%03zu", index);
  return buf;
}

// Greedy accumulation of speech regions into chunks. A region is accepted
// while the chunk (from its start through the region's end) stays shorter
// than max_chunk_s. Cuts land at the midpoint of the preceding silence gap,
// pulled earlier if needed to keep the closing chunk under the limit.
// Leading and trailing silence is excluded. A single region that cannot fit
// is force-cut into max_chunk_s pieces.
inline std::vector<Chunk> chunk_regions(const std::vector<TimeInterval>& regions,
                                        double max_chunk_s = kDefaultMaxChunkS) {
  if (!(max_chunk_s > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "max_chunk_s must be positive");
  std::vector<Chunk> chunks;
  auto push = [&](TimeInterval iv, bool forced) {
    chunks.push_back({make_chunk_id(chunks.size()), iv, forced});
  };

  bool open = false;
  double start = 0.0;
  double last_end = 0.0;

  for (const auto& r : regions) {
    if (r.empty()) continue;
    if (open && r.end_s - start < max_chunk_s) {
      last_end = r.end_s;
      continue;
    }
    double next_start = r.start_s;
    if (open) {
      // Close the current chunk inside the gap [last_end, r.start_s].
      const double mid = 0.5 * (last_end + r.start_s);
      const double limit = 0.5 * (last_end + start + max_chunk_s);
      const double cut = std::min(mid, limit);
      push({start, cut}, false);
      // The new chunk starts at the cut unless that leaves too much leading
      // silence for the region to fit; then it starts later in the gap.
      next_start = cut;
      if (r.end_s - cut >= max_chunk_s && r.duration() < max_chunk_s)
        next_start = std::max(cut, 0.5 * (r.start_s + r.end_s - max_chunk_s));
      if (r.duration() >= max_chunk_s) next_start = r.start_s;
    }
    start = next_start;
    open = true;
    // Force-cut regions that alone reach the limit.
    while (r.end_s - start >= max_chunk_s) {
      push({start, start + max_chunk_s}, true);
      start += max_chunk_s;
    }
    last_end = r.end_s;
    if (!(r.end_s > start)) open = false;
  }
  if (open) push({start, last_end}, false);
  return chunks;
}

}  // namespace convcurate
