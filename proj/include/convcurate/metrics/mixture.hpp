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


// Two-speaker overlap mixtures with a controlled signal-to-interference
// ratio and overlap ratio. Source 1 starts at t_start and ends at t2;
// source 2 starts at t1 and ends at t_end; [t1, t2] is the overlap.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate::metrics {

struct OverlapMixture {
  AudioBuffer mixture;
  // Sources placed on the mixture timeline, source 2 already scaled.
  AudioBuffer source1;
  AudioBuffer source2;
  double t_start = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double t_end = 0.0;
  double gain2 = 1.0;
  double achieved_sir_db = 0.0;

  TimeInterval speaker1_span() const { return {t_start, t2}; }
  TimeInterval speaker2_span() const { return {t1, t_end}; }
  TimeInterval overlap() const { return {t1, t2}; }
};

namespace detail {

inline long double power(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  long double acc = 0.0L;
  for (std::size_t i = lo; i < hi; ++i) acc += static_cast<long double>(x[i]) * x[i];
  return hi > lo ? acc / static_cast<long double>(hi - lo) : 0.0L;
}

}  // namespace detail

// Drops leading and trailing samples whose magnitude is below threshold_db
// relative to the peak.
inline AudioBuffer trim_silence(const AudioBuffer& buf, double threshold_db = -40.0) {
  double peak = 0.0;
  for (double v : buf.samples) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw Error(ErrorCode::kSilentInput, "cannot trim a silent buffer");
  const double thr = peak * std::pow(10.0, threshold_db / 20.0);
  std::size_t lo = 0, hi = buf.samples.size();
  while (lo < hi && std::abs(buf.samples[lo]) < thr) ++lo;
  while (hi > lo && std::abs(buf.samples[hi - 1]) < thr) --hi;
  AudioBuffer out{{buf.samples.begin() + static_cast<std::ptrdiff_t>(lo),
                   buf.samples.begin() + static_cast<std::ptrdiff_t>(hi)},
                  buf.sample_rate_hz, 1};
  return out;
}

// The overlap is overlap_ratio times the shorter source. Source 2 is scaled
// so that 10 log10(P1 / P2) over the overlap equals sir_db.
inline OverlapMixture synth_overlap_mixture(const AudioBuffer& s1, const AudioBuffer& s2,
                                            double sir_db, double overlap_ratio) {
  if (!(overlap_ratio > 0.0 && overlap_ratio <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "overlap_ratio must lie in (0, 1]");
  if (s1.sample_rate_hz != s2.sample_rate_hz || s1.channel_count != 1 || s2.channel_count != 1)
    throw Error(ErrorCode::kInvalidArgument, "sources must be mono at one sample rate");
  const std::size_t n1 = s1.samples.size(), n2 = s2.samples.size();
  if (n1 == 0 || n2 == 0) throw Error(ErrorCode::kInvalidArgument, "empty source");
  const int sr = s1.sample_rate_hz;
  const auto ov = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(overlap_ratio * static_cast<double>(std::min(n1, n2)))));
  const std::size_t offset = n1 - ov;
  const std::size_t total = std::max(n1, offset + n2);

  const long double p1 = detail::power(s1.samples, offset, n1);
  const long double p2 = detail::power(s2.samples, 0, ov);
  if (p1 == 0.0L || p2 == 0.0L)
    throw Error(ErrorCode::kSilentInput, "a source is silent over the overlap");
  const double gain = static_cast<double>(std::sqrt(p1 / (p2 * std::pow(10.0L, sir_db / 10.0L))));

  OverlapMixture m;
  m.source1 = AudioBuffer{std::vector<double>(total, 0.0), sr, 1};
  m.source2 = AudioBuffer{std::vector<double>(total, 0.0), sr, 1};
  std::copy(s1.samples.begin(), s1.samples.end(), m.source1.samples.begin());
  for (std::size_t i = 0; i < n2; ++i) m.source2.samples[offset + i] = gain * s2.samples[i];
  m.mixture = AudioBuffer{std::vector<double>(total, 0.0), sr, 1};
  for (std::size_t i = 0; i < total; ++i)
    m.mixture.samples[i] = m.source1.samples[i] + m.source2.samples[i];

  const double srd = static_cast<double>(sr);
  m.t_start = 0.0;
  m.t1 = static_cast<double>(offset) / srd;
  m.t2 = static_cast<double>(n1) / srd;
  m.t_end = static_cast<double>(offset + n2) / srd;
  m.t_end = std::max(m.t_end, m.t2);
  m.gain2 = gain;
  m.achieved_sir_db = static_cast<double>(
      10.0L * std::log10(detail::power(m.source1.samples, offset, n1) /
                         detail::power(m.source2.samples, offset, n1)));
  return m;
}

}  // namespace convcurate::metrics
