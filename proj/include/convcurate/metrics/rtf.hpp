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

#include <cstdio>
#include <string>
#include <vector>

#include "convcurate/error.hpp"

namespace convcurate::metrics {

struct StageTiming {
  std::string name;
  double processing_s = 0.0;
};

struct StageRtf {
  std::string name;
  double processing_s = 0.0;
  double rtf = 0.0;
};

struct RtfReport {
  std::vector<StageRtf> stages;
  double audio_duration_s = 0.0;
  double total_processing_s = 0.0;
  double total_rtf = 0.0;

  // Plain-text table: audio duration, one row per stage, then the total.
  std::string render() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %18s %8s\n", "Stage", "Processing Time (s)", "RTF");
    out += line;
    std::snprintf(line, sizeof line, "%-28s %18.2f %8s\n", "Audio Duration", audio_duration_s,
                  "--");
    out += line;
    for (const auto& s : stages) {
      std::snprintf(line, sizeof line, "%-28s %18.2f %8.4f\n", s.name.c_str(), s.processing_s,
                    s.rtf);
      out += line;
    }
    std::snprintf(line, sizeof line, "%-28s %18.2f %8.4f\n", "Total", total_processing_s,
                  total_rtf);
    out += line;
    return out;
  }
};

inline RtfReport rtf_report(const std::vector<StageTiming>& stages, double audio_duration_s) {
  if (!(audio_duration_s > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "audio duration must be positive");
  RtfReport r;
  r.audio_duration_s = audio_duration_s;
  for (const auto& s : stages) {
    if (s.processing_s < 0.0)
      throw Error(ErrorCode::kInvalidArgument, "negative processing time for " + s.name);
    r.stages.push_back({s.name, s.processing_s, s.processing_s / audio_duration_s});
    r.total_processing_s += s.processing_s;
  }
  r.total_rtf = r.total_processing_s / audio_duration_s;
  return r;
}

}  // namespace convcurate::metrics
