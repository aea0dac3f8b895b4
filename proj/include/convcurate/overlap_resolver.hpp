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

// Overlapped-speech handling. Only the overlapped interval is sent to the
// two-speaker separator; the two candidates are matched to the speakers by
// cosine similarity against reference embeddings taken from each speaker's
// clean speech, and spliced back into the speakers' own segments.

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"
#include "convcurate/flags.hpp"
#include "convcurate/protocol.hpp"
#include "convcurate/task_context.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

inline constexpr double kDefaultMinReferenceS = 2.0;

struct ReferenceEmbedding {
  std::string speaker_id;
  std::vector<double> vector;
  double source_duration_s = 0.0;
};

// Clean (non-overlapped) speech of one speaker, concatenated in time order.
struct ReferenceAudio {
  std::string speaker_id;
  AudioBuffer audio;
  std::vector<TimeInterval> stretches;
  double duration_s = 0.0;
};

enum class OverlapMode { kCase1Cut, kCase2AssignFirst, kCase3AssignSecond, kCase4Separate };
enum class AssignMode { kFirstCandidate, kJoint };

inline const char* to_string(OverlapMode m) {
  switch (m) {
    case OverlapMode::kCase1Cut: return "case1_cut";
    case OverlapMode::kCase2AssignFirst: return "case2_assign_first";
    case OverlapMode::kCase3AssignSecond: return "case3_assign_second";
    case OverlapMode::kCase4Separate: return "case4_separate";
  }
  return "?";
}

inline std::optional<OverlapMode> overlap_mode_from_string(std::string_view s) {
  for (auto m : {OverlapMode::kCase1Cut, OverlapMode::kCase2AssignFirst,
                 OverlapMode::kCase3AssignSecond, OverlapMode::kCase4Separate})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

struct OverlapPolicy {
  OverlapMode mode = OverlapMode::kCase4Separate;
  AssignMode assign_mode = AssignMode::kFirstCandidate;
  double min_overlap_s = 0.0;
  double crossfade_s = 0.010;
  double min_ref_s = kDefaultMinReferenceS;
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kInvalidArgument, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0 || !std::isfinite(na) || !std::isfinite(nb))
    throw Error(ErrorCode::kZeroNorm, "zero-norm or non-finite embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// References

namespace overlap_detail {

inline bool same_segment(const SpeakerSegment& x, const SpeakerSegment& y) {
  if (!x.segment_id.empty() || !y.segment_id.empty()) return x.segment_id == y.segment_id;
  return x.speaker_id == y.speaker_id && x.interval == y.interval;
}

}  // namespace overlap_detail

// Per speaker: every stretch of their segments not covered by an overlap,
// concatenated. Speakers whose clean speech totals less than min_ref_s are
// absent from the result.
inline std::map<std::string, ReferenceAudio> collect_references(
    const std::vector<SpeakerSegment>& segments,
    const std::vector<OverlapRelation>& overlaps, const AudioBuffer& audio,
    double origin_s = 0.0, double min_ref_s = kDefaultMinReferenceS) {
  std::map<std::string, ReferenceAudio> refs;
  std::vector<SpeakerSegment> ordered = segments;
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) {
    return x.interval.start_s < y.interval.start_s;
  });
  for (const auto& seg : ordered) {
    std::vector<TimeInterval> holes;
    for (const auto& rel : overlaps)
      if (overlap_detail::same_segment(rel.seg_a, seg) ||
          overlap_detail::same_segment(rel.seg_b, seg))
        holes.push_back(rel.overlap);
    auto& ref = refs[seg.speaker_id];
    ref.speaker_id = seg.speaker_id;
    ref.audio.sample_rate_hz = audio.sample_rate_hz;
    for (const auto& clean : subtract(seg.interval, holes)) {
      auto part = slice(audio, clean, origin_s);
      if (part.samples.empty()) continue;
      ref.audio.samples.insert(ref.audio.samples.end(), part.samples.begin(),
                               part.samples.end());
      ref.stretches.push_back(clean);
      ref.duration_s += clean.duration();
    }
  }
  std::erase_if(refs, [&](const auto& kv) { return kv.second.duration_s + 1e-9 < min_ref_s; });
  return refs;
}

// ---------------------------------------------------------------------------
// Identity decision

struct Assignment {
  // true: cand1 -> speaker of ref1 and cand2 -> speaker of ref2.
  bool cand1_to_ref1 = true;
  double s1 = 0.0;  // cos(cand1, ref1)
  double s2 = 0.0;  // cos(cand1, ref2)
  bool joint_used = false;
  bool tie = false;
};

// First-candidate mode compares cand1 against both references and gives
// cand1 to the more similar speaker. Joint mode picks the bijection with the
// larger summed similarity. A first-candidate tie falls through to joint; an
// exact joint tie keeps cand1 -> ref1 and sets the tie flag.
inline Assignment assign_candidates(std::span<const double> cand1,
                                    std::span<const double> cand2,
                                    const ReferenceEmbedding& ref1,
                                    const ReferenceEmbedding& ref2,
                                    AssignMode mode = AssignMode::kFirstCandidate) {
  Assignment a;
  a.s1 = cosine_similarity(cand1, ref1.vector);
  a.s2 = cosine_similarity(cand1, ref2.vector);
  const double c2r1 = cosine_similarity(cand2, ref1.vector);
  const double c2r2 = cosine_similarity(cand2, ref2.vector);
  if (mode == AssignMode::kFirstCandidate && a.s1 != a.s2) {
    a.cand1_to_ref1 = a.s1 > a.s2;
    return a;
  }
  a.joint_used = true;
  const double keep = a.s1 + c2r2;
  const double swap = a.s2 + c2r1;
  if (keep == swap) {
    a.tie = true;
    a.cand1_to_ref1 = true;
  } else {
    a.cand1_to_ref1 = keep > swap;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Segment tracks and splicing

// A segment's audio as it is rebuilt: starts as the mixture slice, gains
// separated overlap audio, and finally loses any cut intervals.
struct SegmentTrack {
  SpeakerSegment segment;
  AudioBuffer audio;  // covers segment.interval exactly
  std::vector<TimeInterval> separated;
  std::vector<TimeInterval> cuts;
  Flags flags;
};

inline SegmentTrack make_track(const SpeakerSegment& seg, const AudioBuffer& chunk_audio,
                               double origin_s) {
  return {seg, slice(chunk_audio, seg.interval, origin_s), {}, {}, {}};
}

// Splices `candidate` (covering `cand_span`, which contains `overlap`) into
// the track over `overlap`. Where the track continues past the overlap, a
// linear crossfade of crossfade_s blends the candidate with the original
// audio on the outside of the overlap.
inline void splice_candidate(SegmentTrack& track, const AudioBuffer& candidate,
                             const TimeInterval& cand_span, const TimeInterval& overlap,
                             double crossfade_s, double origin_s) {
  const int sr = track.audio.sample_rate_hz;
  const auto seg0 = sample_index(track.segment.interval.start_s, origin_s, sr);
  const auto seg1 = seg0 + static_cast<std::int64_t>(track.audio.samples.size());
  const auto cand0 = sample_index(cand_span.start_s, origin_s, sr);
  const auto cand1 = cand0 + static_cast<std::int64_t>(candidate.samples.size());
  const auto ov0 = std::max(sample_index(overlap.start_s, origin_s, sr), seg0);
  const auto ov1 = std::min(sample_index(overlap.end_s, origin_s, sr), seg1);
  const auto fade = static_cast<std::int64_t>(std::llround(crossfade_s * sr));

  auto cand_at = [&](std::int64_t n) {
    return (n >= cand0 && n < cand1) ? candidate.samples[static_cast<std::size_t>(n - cand0)]
                                     : 0.0;
  };
  auto& out = track.audio.samples;
  for (auto n = ov0; n < ov1; ++n) out[static_cast<std::size_t>(n - seg0)] = cand_at(n);
  if (fade > 0) {
    // Left ramp, only where the segment has audio before the overlap.
    for (auto n = std::max(ov0 - fade, std::max(seg0, cand0)); n < ov0; ++n) {
      const double w = static_cast<double>(n - (ov0 - fade)) / static_cast<double>(fade);
      auto& v = out[static_cast<std::size_t>(n - seg0)];
      v = (1.0 - w) * v + w * cand_at(n);
    }
    for (auto n = ov1; n < std::min(ov1 + fade, std::min(seg1, cand1)); ++n) {
      const double w = static_cast<double>(ov1 + fade - n) / static_cast<double>(fade);
      auto& v = out[static_cast<std::size_t>(n - seg0)];
      v = (1.0 - w) * v + w * cand_at(n);
    }
  }
  track.separated.push_back(overlap);
  track.flags.insert(flag::kSeparated);
}

// Applies the cuts; one output piece per surviving stretch. Pieces of a
// split segment get an ".pN" id suffix.
inline std::vector<SegmentTrack> finalize_track(const SegmentTrack& track, double origin_s) {
  if (track.cuts.empty()) return {track};
  const auto keep = subtract(track.segment.interval, track.cuts);
  std::vector<SegmentTrack> pieces;
  const int sr = track.audio.sample_rate_hz;
  const auto seg0 = sample_index(track.segment.interval.start_s, origin_s, sr);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    SegmentTrack p;
    p.segment = track.segment;
    p.segment.interval = keep[i];
    if (keep.size() > 1) p.segment.segment_id += ".p" + std::to_string(i);
    p.flags = track.flags;
    p.audio.sample_rate_hz = sr;
    const auto lo = sample_index(keep[i].start_s, origin_s, sr) - seg0;
    const auto hi = sample_index(keep[i].end_s, origin_s, sr) - seg0;
    for (auto n = std::max<std::int64_t>(lo, 0);
         n < std::min<std::int64_t>(hi, static_cast<std::int64_t>(track.audio.samples.size()));
         ++n)
      p.audio.samples.push_back(track.audio.samples[static_cast<std::size_t>(n)]);
    for (const auto& s : track.separated)
      if (auto x = intersect(s, keep[i])) p.separated.push_back(*x);
    pieces.push_back(std::move(p));
  }
  return pieces;
}

// True when some segment of a third speaker intersects the overlap window.
inline bool third_speaker_present(const OverlapRelation& rel,
                                  const std::vector<SpeakerSegment>& segments) {
  for (const auto& s : segments) {
    if (s.speaker_id == rel.seg_a.speaker_id || s.speaker_id == rel.seg_b.speaker_id) continue;
    if (intersect(s.interval, rel.overlap)) return true;
  }
  return false;
}

// Geometry-only resolutions (case 1-3, and the fallbacks).
inline void apply_cut_policy(OverlapMode mode, const OverlapRelation& rel,
                             SegmentTrack& track_a, SegmentTrack& track_b) {
  switch (mode) {
    case OverlapMode::kCase1Cut:
      track_a.cuts.push_back(rel.overlap);
      track_b.cuts.push_back(rel.overlap);
      break;
    case OverlapMode::kCase2AssignFirst:
      track_b.cuts.push_back(rel.overlap);
      break;
    case OverlapMode::kCase3AssignSecond:
      track_a.cuts.push_back(rel.overlap);
      break;
    case OverlapMode::kCase4Separate:
      break;
  }
}

struct SeparationAttempt {
  bool separated = false;
  std::optional<Assignment> assignment;
  Flags flags;
};

inline std::vector<double> embed_audio(TaskContext& ctx, const AudioBuffer& audio,
                                       double source_start_s, Flags& flags) {
  auto req = ctx.request(TaskKind::kEmbed, InlinePcm{audio}, nlohmann::json::object(),
                         source_start_s);
  auto resp = ctx.run("overlap_resolve", req);
  if (!resp.ok()) {
    flags.insert(flag::kEmbeddingFailed);
    return {};
  }
  return resp.get<EmbedResult>().vector;
}

// Case-4 core: separate the padded overlap, identify candidates and splice
// them into both tracks. Falls back to case-1 cuts (flagged) when a
// reference is missing; keeps the original audio (flagged unresolved) when
// the separator or embedder fails.
inline SeparationAttempt separate_overlap(const OverlapRelation& rel,
                                          const AudioBuffer& chunk_audio, double origin_s,
                                          const TimeInterval& audio_span,
                                          const OverlapPolicy& policy,
                                          const std::optional<ReferenceEmbedding>& ref_a,
                                          const std::optional<ReferenceEmbedding>& ref_b,
                                          TaskContext& ctx, SegmentTrack& track_a,
                                          SegmentTrack& track_b) {
  SeparationAttempt res;
  if (!ref_a || !ref_b || ref_a->vector.empty() || ref_b->vector.empty()) {
    apply_cut_policy(OverlapMode::kCase1Cut, rel, track_a, track_b);
    res.flags.insert(flag::kNoReference);
    track_a.flags.insert(flag::kNoReference);
    track_b.flags.insert(flag::kNoReference);
    return res;
  }
  const TimeInterval padded{std::max(rel.overlap.start_s - policy.crossfade_s, audio_span.start_s),
                            std::min(rel.overlap.end_s + policy.crossfade_s, audio_span.end_s)};
  auto mixture = slice(chunk_audio, padded, origin_s);
  auto sep = ctx.run("overlap_resolve",
                     ctx.request(TaskKind::kSeparate2, InlinePcm{mixture},
                                 nlohmann::json::object(), padded.start_s));
  auto mark_unresolved = [&] {
    res.flags.insert(flag::kSeparationFailed);
    track_a.flags.insert(flag::kSeparationFailed);
    track_b.flags.insert(flag::kSeparationFailed);
  };
  if (!sep.ok()) {
    mark_unresolved();
    return res;
  }
  auto sources = sep.get<SeparateResult>().sources;
  const auto expected = mixture.samples.size();
  for (auto& s : sources) {
    // Tolerate off-by-one lengths from the backend; pad or trim to match.
    if (s.samples.size() + 1 < expected || s.samples.size() > expected + 1 ||
        s.sample_rate_hz != mixture.sample_rate_hz) {
      mark_unresolved();
      return res;
    }
    s.samples.resize(expected, 0.0);
  }

  // Embeddings are taken on the overlap proper, without the padding.
  const TimeInterval trim{rel.overlap.start_s, rel.overlap.end_s};
  auto emb1 = embed_audio(ctx, slice(sources[0], trim, padded.start_s), trim.start_s, res.flags);
  auto emb2 = embed_audio(ctx, slice(sources[1], trim, padded.start_s), trim.start_s, res.flags);
  if (emb1.empty() || emb2.empty()) {
    mark_unresolved();
    return res;
  }
  Assignment assign;
  try {
    assign = assign_candidates(emb1, emb2, *ref_a, *ref_b, policy.assign_mode);
  } catch (const Error&) {
    res.flags.insert(flag::kEmbeddingFailed);
    mark_unresolved();
    return res;
  }
  const auto& for_a = assign.cand1_to_ref1 ? sources[0] : sources[1];
  const auto& for_b = assign.cand1_to_ref1 ? sources[1] : sources[0];
  splice_candidate(track_a, for_a, padded, rel.overlap, policy.crossfade_s, origin_s);
  splice_candidate(track_b, for_b, padded, rel.overlap, policy.crossfade_s, origin_s);
  if (assign.joint_used) {
    track_a.flags.insert(flag::kJointAssignment);
    track_b.flags.insert(flag::kJointAssignment);
  }
  if (assign.tie) {
    track_a.flags.insert(flag::kAssignmentTie);
    track_b.flags.insert(flag::kAssignmentTie);
  }
  res.separated = true;
  res.assignment = assign;
  return res;
}

// Embeds each reference once; speakers whose embedding fails are absent.
inline std::map<std::string, ReferenceEmbedding> embed_references(
    const std::map<std::string, ReferenceAudio>& refs, TaskContext& ctx) {
  std::map<std::string, ReferenceEmbedding> out;
  for (const auto& [speaker, ref] : refs) {
    Flags ignored;
    const double start = ref.stretches.empty() ? 0.0 : ref.stretches.front().start_s;
    auto vec = embed_audio(ctx, ref.audio, start, ignored);
    if (vec.empty()) continue;
    out[speaker] = ReferenceEmbedding{speaker, std::move(vec), ref.duration_s};
  }
  return out;
}

struct ResolvedOverlap {
  // Pieces for seg_a first, then seg_b. Case 1 can split or drop segments.
  std::vector<SegmentTrack> outputs;
  std::optional<Assignment> assignment;
  Flags flags;
};

// Resolves a single overlap relation. `chunk_audio` starts at origin_s;
// reference embeddings are for seg_a's and seg_b's speakers.
inline ResolvedOverlap resolve_overlap(const OverlapRelation& rel,
                                       const AudioBuffer& chunk_audio, double origin_s,
                                       const OverlapPolicy& policy,
                                       const std::optional<ReferenceEmbedding>& ref_a,
                                       const std::optional<ReferenceEmbedding>& ref_b,
                                       TaskContext& ctx) {
  ResolvedOverlap out;
  auto track_a = make_track(rel.seg_a, chunk_audio, origin_s);
  auto track_b = make_track(rel.seg_b, chunk_audio, origin_s);
  const TimeInterval span{origin_s, origin_s + chunk_audio.duration_s()};
  if (rel.overlap.duration() < policy.min_overlap_s) {
    // Below the processing threshold: left as diarized.
  } else if (policy.mode == OverlapMode::kCase4Separate) {
    auto attempt = separate_overlap(rel, chunk_audio, origin_s, span, policy, ref_a, ref_b,
                                    ctx, track_a, track_b);
    out.assignment = attempt.assignment;
    out.flags = attempt.flags;
  } else {
    apply_cut_policy(policy.mode, rel, track_a, track_b);
  }
  for (auto& t : {track_a, track_b})
    for (auto& p : finalize_track(t, origin_s)) out.outputs.push_back(std::move(p));
  return out;
}

}  // namespace convcurate
