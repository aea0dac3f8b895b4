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

#pragma once

#include <set>
#include <string>

namespace convcurate {

// Fallbacks and anomalies recorded in the manifest. Ordered so that
// serialization is deterministic.
using Flags = std::set<std::string>;

namespace flag {

inline constexpr const char* kClipped = "clipped";
inline constexpr const char* kForcedCut = "forced_cut";
inline constexpr const char* kNoReference = "no_reference_fallback_case1";
inline constexpr const char* kSeparationFailed = "unresolved";
inline constexpr const char* kEmbeddingFailed = "embedding_failed";
inline constexpr const char* kMultiSpeaker = "multi_speaker_unresolved";
inline constexpr const char* kAssignmentTie = "assignment_tie";
inline constexpr const char* kJointAssignment = "joint_assignment";
inline constexpr const char* kSeparated = "separated";
inline constexpr const char* kMusic = "music";
inline constexpr const char* kSplitExtraction = "split_extraction";
inline constexpr const char* kVocalExtractionFailed = "vocal_extraction_failed";
inline constexpr const char* kTaggingFailed = "tagging_failed";
inline constexpr const char* kDenoiseFailed = "denoise_failed";
inline constexpr const char* kDegradedEnsemble = "degraded_ensemble";
inline constexpr const char* kPrimaryPromoted = "primary_promoted";
inline constexpr const char* kAsrFailed = "asr_failed";
inline constexpr const char* kInterpolatedAll = "interpolated_all";
inline constexpr const char* kRepetitionDiscarded = "repetition_discarded";
inline constexpr const char* kHypothesisLooped = "hypothesis_repetition_dropped";
inline constexpr const char* kCaptionFailed = "caption_failed";
inline constexpr const char* kDiarizationFailed = "diarization_failed";
inline constexpr const char* kVadFailed = "vad_failed";
inline constexpr const char* kRegionDropped = "duplex_region_dropped";
inline constexpr const char* kTaggedAtSegment = "music_tagged_per_segment";

}  // namespace flag

}  // namespace convcurate
