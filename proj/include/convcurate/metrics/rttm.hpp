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

// RTTM reading and writing. Only SPEAKER lines are used:
//   SPEAKER <recording> <channel> <onset> <duration> <NA> <NA> <speaker> ...
// Extra trailing columns are ignored; ';;' lines are comments.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate::metrics {

struct RttmSegment {
  std::string recording_id;
  std::string speaker_id;
  TimeInterval interval;
};

inline std::vector<RttmSegment> parse_rttm(std::istream& in) {
  std::vector<RttmSegment> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty() || f[0].rfind(";;", 0) == 0) continue;
    if (f[0] != "SPEAKER") continue;
    if (f.size() < 8)
      throw Error(ErrorCode::kInvalidArgument,
                  "RTTM line " + std::to_string(lineno) + ": expected at least 8 fields");
    RttmSegment seg;
    seg.recording_id = f[1];
    seg.speaker_id = f[7];
    try {
      const double onset = std::stod(f[3]);
      const double dur = std::stod(f[4]);
      if (dur < 0.0 || onset < 0.0) throw std::out_of_range("negative");
      seg.interval = {onset, onset + dur};
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument,
                  "RTTM line " + std::to_string(lineno) + ": bad onset/duration");
    }
    if (seg.interval.empty()) continue;
    out.push_back(std::move(seg));
  }
  return out;
}

inline std::vector<RttmSegment> read_rttm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse_rttm(in);
}

inline void write_rttm(std::ostream& out, const std::vector<RttmSegment>& segs) {
  for (const auto& s : segs) {
    out << "SPEAKER " << s.recording_id << " 1 " << std::fixed << std::setprecision(3)
        << s.interval.start_s << " " << s.interval.duration() << " <NA> <NA> " << s.speaker_id
        << " <NA> <NA>\n";
  }
  out << std::defaultfloat;
}

}  // namespace convcurate::metrics
