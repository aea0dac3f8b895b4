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

// Diarization error rate with a forgiveness collar, Jaccard error rate and
// the region-restricted variants (short segments, speaker changes).
//
// Scoring is exact: the timeline is cut at every reference, hypothesis and
// mask boundary and each elementary interval is scored as a whole.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/metrics/rttm.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate::metrics {

inline constexpr double kDefaultCollarS = 0.25;
inline constexpr double kDefaultTurnWindowS = 0.5;
inline constexpr double kDefaultTurnGapS = 0.5;

struct DerBreakdown {
  double missed_s = 0.0;
  double false_alarm_s = 0.0;
  double confusion_s = 0.0;
  double total_ref_speech_s = 0.0;
  double der = 0.0;
  // Reference speaker -> hypothesis speaker.
  std::map<std::string, std::string> mapping;
};

// Result of a region-restricted DER; absent when the region is empty.
struct RestrictedDer {
  std::optional<DerBreakdown> breakdown;
  bool empty_scoring_region = false;
};

namespace detail {

using SpeakerTimeline = std::map<std::string, std::vector<TimeInterval>>;

inline SpeakerTimeline by_speaker(const std::vector<RttmSegment>& segs) {
  SpeakerTimeline out;
  for (const auto& s : segs) out[s.speaker_id].push_back(s.interval);
  for (auto& [spk, v] : out) v = merge_intervals(std::move(v));
  return out;
}

inline bool covers(const std::vector<TimeInterval>& sorted, double t) {
  auto it = std::upper_bound(sorted.begin(), sorted.end(), t,
                             [](double x, const TimeInterval& iv) { return x < iv.start_s; });
  if (it == sorted.begin()) return false;
  --it;
  return t < it->end_s;
}

// Minimum-cost assignment of rows to columns (rows <= cols), O(n^2 m).
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = n ? static_cast<int>(cost[0].size()) : 0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1), v(m + 1);
  std::vector<int> p(m + 1), way(m + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j]) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Maps reference speakers to hypothesis speakers maximizing total
// co-occurrence. Exhaustive search for small problems, Hungarian otherwise.
// Index -1 means unmapped.
inline std::vector<int> best_mapping(const std::vector<std::vector<double>>& overlap,
                                     std::size_t n_hyp) {
  const std::size_t n_ref = overlap.size();
  std::vector<int> best(n_ref, -1);
  if (n_ref == 0 || n_hyp == 0) return best;
  if (n_ref <= 4 && n_hyp <= 4) {
    std::vector<int> cur(n_ref, -1);
    std::vector<char> used(n_hyp, 0);
    double best_score = -1.0;
    auto rec = [&](auto& self, std::size_t r, double score) -> void {
      if (r == n_ref) {
        if (score > best_score) {
          best_score = score;
          best = cur;
        }
        return;
      }
      cur[r] = -1;
      self(self, r + 1, score);
      for (std::size_t h = 0; h < n_hyp; ++h) {
        if (used[h]) continue;
        used[h] = 1;
        cur[r] = static_cast<int>(h);
        self(self, r + 1, score + overlap[r][h]);
        used[h] = 0;
      }
      cur[r] = -1;
    };
    rec(rec, 0, 0.0);
    return best;
  }
  // Square matrix: padding rows and columns are zero-gain dummies.
  const std::size_t n = std::max(n_ref, n_hyp);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n_ref; ++r)
    for (std::size_t h = 0; h < n_hyp; ++h) cost[r][h] = -overlap[r][h];
  const auto assign = hungarian(cost);
  for (std::size_t r = 0; r < n_ref; ++r) {
    const int h = assign[r];
    if (h >= 0 && static_cast<std::size_t>(h) < n_hyp && overlap[r][h] > 0.0) best[r] = h;
  }
  return best;
}

inline std::vector<TimeInterval> collar_mask(const std::vector<RttmSegment>& ref,
                                             double collar_s) {
  std::vector<TimeInterval> holes;
  if (collar_s <= 0.0) return holes;
  for (const auto& [spk, ivs] : by_speaker(ref))
    for (const auto& iv : ivs) {
      holes.push_back({iv.start_s - collar_s, iv.start_s + collar_s});
      holes.push_back({iv.end_s - collar_s, iv.end_s + collar_s});
    }
  return merge_intervals(std::move(holes));
}

// Scores within `region` (sorted, disjoint) minus the collar mask. With no
// region the whole span of both timelines is scored.
inline DerBreakdown score(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp,
                          double collar_s, const std::optional<std::vector<TimeInterval>>& region) {
  const auto R = by_speaker(ref);
  const auto H = by_speaker(hyp);
  std::vector<std::string> ref_ids, hyp_ids;
  for (const auto& [k, v] : R) ref_ids.push_back(k);
  for (const auto& [k, v] : H) hyp_ids.push_back(k);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* tl : {&R, &H})
    for (const auto& [k, v] : *tl)
      for (const auto& iv : v) {
        lo = std::min(lo, iv.start_s);
        hi = std::max(hi, iv.end_s);
      }
  std::vector<TimeInterval> scored;
  const auto holes = collar_mask(ref, collar_s);
  if (region) {
    for (const auto& piece : *region)
      for (const auto& s : subtract(piece, holes)) scored.push_back(s);
  } else if (lo < hi) {
    scored = subtract({lo, hi}, holes);
  }

  std::vector<double> cuts;
  for (const auto* tl : {&R, &H})
    for (const auto& [k, v] : *tl)
      for (const auto& iv : v) {
        cuts.push_back(iv.start_s);
        cuts.push_back(iv.end_s);
      }
  for (const auto& s : scored) {
    cuts.push_back(s.start_s);
    cuts.push_back(s.end_s);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  struct Piece {
    double dur;
    std::vector<int> r, h;
  };
  std::vector<Piece> pieces;
  std::vector<std::vector<double>> overlap(ref_ids.size(), std::vector<double>(hyp_ids.size()));
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
    if (!covers(scored, mid)) continue;
    Piece p{cuts[k + 1] - cuts[k], {}, {}};
    for (std::size_t i = 0; i < ref_ids.size(); ++i)
      if (covers(R.at(ref_ids[i]), mid)) p.r.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < hyp_ids.size(); ++j)
      if (covers(H.at(hyp_ids[j]), mid)) p.h.push_back(static_cast<int>(j));
    if (p.r.empty() && p.h.empty()) continue;
    for (int i : p.r)
      for (int j : p.h) overlap[i][j] += p.dur;
    pieces.push_back(std::move(p));
  }

  const auto map = best_mapping(overlap, hyp_ids.size());
  DerBreakdown out;
  for (std::size_t i = 0; i < ref_ids.size(); ++i)
    if (map[i] >= 0) out.mapping[ref_ids[i]] = hyp_ids[map[i]];
  for (const auto& p : pieces) {
    const auto nr = static_cast<double>(p.r.size());
    const auto nh = static_cast<double>(p.h.size());
    double correct = 0.0;
    for (int i : p.r)
      if (map[i] >= 0 && std::find(p.h.begin(), p.h.end(), map[i]) != p.h.end()) correct += 1.0;
    out.total_ref_speech_s += nr * p.dur;
    out.missed_s += std::max(0.0, nr - nh) * p.dur;
    out.false_alarm_s += std::max(0.0, nh - nr) * p.dur;
    out.confusion_s += (std::min(nr, nh) - correct) * p.dur;
  }
  if (out.total_ref_speech_s > 0.0)
    out.der = (out.missed_s + out.false_alarm_s + out.confusion_s) / out.total_ref_speech_s;
  return out;
}

inline RestrictedDer restricted(const std::vector<RttmSegment>& ref,
                                const std::vector<RttmSegment>& hyp, double collar_s,
                                std::vector<TimeInterval> region) {
  RestrictedDer out;
  region = merge_intervals(std::move(region));
  if (region.empty()) {
    out.empty_scoring_region = true;
    return out;
  }
  auto b = score(ref, hyp, collar_s, region);
  if (!(b.total_ref_speech_s > 0.0)) {
    out.empty_scoring_region = true;
    return out;
  }
  out.breakdown = std::move(b);
  return out;
}

}  // namespace detail

inline DerBreakdown der(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp,
                        double collar_s = kDefaultCollarS) {
  if (ref.empty()) throw Error(ErrorCode::kEmptyReference, "reference has no speech");
  auto b = detail::score(ref, hyp, collar_s, std::nullopt);
  if (!(b.total_ref_speech_s > 0.0))
    throw Error(ErrorCode::kEmptyReference, "no reference speech outside the collars");
  return b;
}

// Mean over reference speakers of the Jaccard distance to the mapped
// hypothesis speaker. The mapping comes from an uncollared DER.
inline double jer(const std::vector<RttmSegment>& ref, const std::vector<RttmSegment>& hyp) {
  const auto b = der(ref, hyp, 0.0);
  const auto R = detail::by_speaker(ref);
  const auto H = detail::by_speaker(hyp);
  double sum = 0.0;
  for (const auto& [spk, r] : R) {
    auto it = b.mapping.find(spk);
    if (it == b.mapping.end()) {
      sum += 1.0;
      continue;
    }
    const auto& h = H.at(it->second);
    double inter = 0.0;
    for (const auto& x : intersect_all(r, h)) inter += x.duration();
    const double uni = union_duration(r) + union_duration(h) - inter;
    sum += 1.0 - inter / uni;
  }
  return sum / static_cast<double>(R.size());
}

// Scores only inside reference segments no longer than max_dur_s. The
// collar still applies, so with the default collar a segment of 0.5 s or
// less is entirely masked by its own boundaries.
inline RestrictedDer der_short(const std::vector<RttmSegment>& ref,
                               const std::vector<RttmSegment>& hyp, double max_dur_s,
                               double collar_s = kDefaultCollarS) {
  if (ref.empty()) throw Error(ErrorCode::kEmptyReference, "reference has no speech");
  std::vector<TimeInterval> region;
  for (const auto& s : ref)
    if (s.interval.duration() <= max_dur_s) region.push_back(s.interval);
  return detail::restricted(ref, hyp, collar_s, std::move(region));
}

// Change points: for reference segments a, b of different speakers with a
// starting and ending no later than b and b.start - a.end <= max_gap_s, the
// midpoint of a.end and b.start.
inline std::vector<double> change_points(const std::vector<RttmSegment>& ref,
                                         double max_gap_s = kDefaultTurnGapS) {
  std::vector<double> cps;
  for (const auto& a : ref)
    for (const auto& b : ref) {
      if (a.speaker_id == b.speaker_id) continue;
      if (a.interval.start_s > b.interval.start_s || a.interval.end_s > b.interval.end_s) continue;
      if (b.interval.start_s - a.interval.end_s > max_gap_s) continue;
      cps.push_back(0.5 * (a.interval.end_s + b.interval.start_s));
    }
  std::sort(cps.begin(), cps.end());
  cps.erase(std::unique(cps.begin(), cps.end()), cps.end());
  return cps;
}

inline RestrictedDer der_turn(const std::vector<RttmSegment>& ref,
                              const std::vector<RttmSegment>& hyp,
                              double window_s = kDefaultTurnWindowS,
                              double max_gap_s = kDefaultTurnGapS,
                              double collar_s = kDefaultCollarS) {
  if (ref.empty()) throw Error(ErrorCode::kEmptyReference, "reference has no speech");
  std::vector<TimeInterval> region;
  for (double cp : change_points(ref, max_gap_s)) region.push_back({cp - window_s, cp + window_s});
  return detail::restricted(ref, hyp, collar_s, std::move(region));
}

}  // namespace convcurate::metrics
