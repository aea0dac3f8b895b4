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

// Interval and segment algebra shared by every stage. Times are real
// seconds; quantization to samples happens only at audio boundaries.

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace convcurate {

struct TimeInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  bool empty() const { return !(end_s > start_s); }

  bool contains(const TimeInterval& other) const {
    return start_s <= other.start_s && other.end_s <= end_s;
  }
  bool contains(double t) const { return start_s <= t && t <= end_s; }

  friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

struct SpeakerSegment {
  std::string speaker_id;
  TimeInterval interval;
  std::string chunk_id;
  std::string segment_id;
};

enum class OverlapKind { kContainment, kPartial };

inline const char* to_string(OverlapKind kind) {
  return kind == OverlapKind::kContainment ? "containment" : "partial";
}

// Pairwise overlap between two segments of distinct speakers. seg_a is
// the segment that starts first (ties: the longer one), so for a partial
// overlap seg_a spans [t_start, t2] and seg_b spans [t1, t_end].
struct OverlapRelation {
  SpeakerSegment seg_a;
  SpeakerSegment seg_b;
  OverlapKind kind = OverlapKind::kPartial;
  TimeInterval overlap;
};

struct Turn {
  std::string speaker_id;
  TimeInterval interval;
  std::vector<std::size_t> word_refs;
};

// Touching endpoints carry no audio, so they do not intersect.
inline std::optional<TimeInterval> intersect(const TimeInterval& a,
                                             const TimeInterval& b) {
  const double lo = std::max(a.start_s, b.start_s);
  const double hi = std::min(a.end_s, b.end_s);
  if (!(hi > lo)) return std::nullopt;
  return TimeInterval{lo, hi};
}

namespace detail {

// Canonical order used to decide which segment of a pair is "a".
inline bool precedes(const SpeakerSegment& x, const SpeakerSegment& y) {
  if (x.interval.start_s != y.interval.start_s)
    return x.interval.start_s < y.interval.start_s;
  if (x.interval.end_s != y.interval.end_s)
    return x.interval.end_s > y.interval.end_s;
  if (x.speaker_id != y.speaker_id) return x.speaker_id < y.speaker_id;
  return x.segment_id < y.segment_id;
}

}  // namespace detail

inline std::optional<OverlapRelation> classify_pair(const SpeakerSegment& a,
                                                    const SpeakerSegment& b) {
  if (a.speaker_id == b.speaker_id) return std::nullopt;
  auto overlap = intersect(a.interval, b.interval);
  if (!overlap) return std::nullopt;
  OverlapRelation rel;
  const bool a_first = detail::precedes(a, b);
  rel.seg_a = a_first ? a : b;
  rel.seg_b = a_first ? b : a;
  rel.overlap = *overlap;
  rel.kind = (a.interval.contains(b.interval) || b.interval.contains(a.interval))
                 ? OverlapKind::kContainment
                 : OverlapKind::kPartial;
  return rel;
}

// Sweep over start-sorted segments; each intersecting distinct-speaker
// pair is reported once, ordered by overlap start.
inline std::vector<OverlapRelation> find_overlaps(
    std::vector<SpeakerSegment> segments) {
  std::stable_sort(segments.begin(), segments.end(), detail::precedes);
  std::vector<OverlapRelation> out;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& cur = segments[i];
    std::erase_if(active, [&](std::size_t j) {
      return !(segments[j].interval.end_s > cur.interval.start_s);
    });
    for (std::size_t j : active) {
      if (auto rel = classify_pair(segments[j], cur)) out.push_back(*rel);
    }
    active.push_back(i);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const OverlapRelation& x, const OverlapRelation& y) {
                     if (x.overlap.start_s != y.overlap.start_s)
                       return x.overlap.start_s < y.overlap.start_s;
                     return x.overlap.end_s < y.overlap.end_s;
                   });
  return out;
}

// Sorted, disjoint union. Touching intervals merge.
inline std::vector<TimeInterval> merge_intervals(
    std::vector<TimeInterval> intervals) {
  std::erase_if(intervals, [](const TimeInterval& t) { return t.empty(); });
  std::sort(intervals.begin(), intervals.end(),
            [](const TimeInterval& x, const TimeInterval& y) {
              return x.start_s < y.start_s ||
                     (x.start_s == y.start_s && x.end_s < y.end_s);
            });
  std::vector<TimeInterval> merged;
  for (const auto& t : intervals) {
    if (!merged.empty() && t.start_s <= merged.back().end_s) {
      merged.back().end_s = std::max(merged.back().end_s, t.end_s);
    } else {
      merged.push_back(t);
    }
  }
  return merged;
}

inline double union_duration(std::vector<TimeInterval> intervals) {
  double total = 0.0;
  for (const auto& t : merge_intervals(std::move(intervals)))
    total += t.duration();
  return total;
}

// Parts of `base` not covered by any interval in `holes`.
inline std::vector<TimeInterval> subtract(const TimeInterval& base,
                                          std::vector<TimeInterval> holes) {
  std::vector<TimeInterval> out;
  double cursor = base.start_s;
  for (const auto& h : merge_intervals(std::move(holes))) {
    if (h.end_s <= cursor) continue;
    if (h.start_s >= base.end_s) break;
    if (h.start_s > cursor) out.push_back({cursor, h.start_s});
    cursor = std::max(cursor, h.end_s);
  }
  if (cursor < base.end_s) out.push_back({cursor, base.end_s});
  return out;
}

// Intersection of two sorted disjoint interval lists.
inline std::vector<TimeInterval> intersect_all(
    const std::vector<TimeInterval>& a, const std::vector<TimeInterval>& b) {
  std::vector<TimeInterval> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (auto x = intersect(a[i], b[j])) out.push_back(*x);
    if (a[i].end_s < b[j].end_s) ++i; else ++j;
  }
  return out;
}

// One turn per segment, ordered by start. Segments flagged as excluded by
// the caller should be filtered before this point.
inline std::vector<Turn> build_turns(std::vector<SpeakerSegment> segments) {
  std::stable_sort(segments.begin(), segments.end(),
                   [](const SpeakerSegment& x, const SpeakerSegment& y) {
                     return x.interval.start_s < y.interval.start_s;
                   });
  std::vector<Turn> turns;
  turns.reserve(segments.size());
  for (auto& s : segments) turns.push_back({s.speaker_id, s.interval, {}});
  return turns;
}

}  // namespace convcurate
