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

// Audio standardization: mono downmix, polyphase resampling and RMS
// loudness normalization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

inline constexpr int kStandardSampleRate = 16000;
inline constexpr double kStandardLoudnessDbfs = -20.0;

// Real-valued PCM, interleaved when channel_count > 1.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate_hz = kStandardSampleRate;
  int channel_count = 1;

  std::size_t frames() const {
    return channel_count > 0 ? samples.size() / channel_count : 0;
  }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(frames()) / sample_rate_hz
                              : 0.0;
  }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

struct LoudnessReport {
  double dbfs = 0.0;
  std::int64_t clipped_sample_count = 0;
};

struct NormalizeResult {
  AudioBuffer audio;
  // dbfs is the loudness measured before the gain was applied.
  LoudnessReport report;
  double gain = 1.0;
};

// Sample index of time t in a buffer whose first sample sits at origin_s.
inline std::int64_t sample_index(double t, double origin_s, int sample_rate_hz) {
  return std::llround((t - origin_s) * sample_rate_hz);
}

// Mono slice [interval] of a buffer starting at origin_s, zero-padded where
// the interval runs past the buffer.
inline AudioBuffer slice(const AudioBuffer& buf, const TimeInterval& interval,
                         double origin_s = 0.0) {
  if (buf.channel_count != 1)
    throw Error(ErrorCode::kInvalidArgument, "slice expects mono audio");
  const auto lo = sample_index(interval.start_s, origin_s, buf.sample_rate_hz);
  const auto hi = sample_index(interval.end_s, origin_s, buf.sample_rate_hz);
  AudioBuffer out{{}, buf.sample_rate_hz, 1};
  if (hi <= lo) return out;
  out.samples.assign(static_cast<std::size_t>(hi - lo), 0.0);
  const auto n = static_cast<std::int64_t>(buf.samples.size());
  for (auto i = std::max<std::int64_t>(lo, 0); i < std::min(hi, n); ++i)
    out.samples[static_cast<std::size_t>(i - lo)] =
        buf.samples[static_cast<std::size_t>(i)];
  return out;
}

inline AudioBuffer to_mono(const AudioBuffer& buf) {
  if (buf.channel_count < 1)
    throw Error(ErrorCode::kInvalidArgument, "channel_count must be >= 1");
  if (buf.channel_count == 1) return buf;
  const auto ch = static_cast<std::size_t>(buf.channel_count);
  AudioBuffer out{{}, buf.sample_rate_hz, 1};
  out.samples.resize(buf.frames());
  for (std::size_t f = 0; f < out.samples.size(); ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < ch; ++c) sum += buf.samples[f * ch + c];
    out.samples[f] = sum / static_cast<double>(ch);
  }
  return out;
}

struct ResamplerOptions {
  // Filter half-length in input-rate zero crossings at the lower of the
  // two rates.
  int half_taps = 32;
  double kaiser_beta = 8.6;
  double rolloff = 0.94;
};

// Polyphase windowed-sinc resampler for rational ratios up/down.
inline AudioBuffer resample(const AudioBuffer& buf, int target_hz,
                            const ResamplerOptions& opts = {}) {
  if (buf.channel_count != 1)
    throw Error(ErrorCode::kInvalidArgument, "resample expects mono audio");
  if (target_hz <= 0 || buf.sample_rate_hz <= 0)
    throw Error(ErrorCode::kInvalidArgument, "sample rates must be positive");
  if (target_hz == buf.sample_rate_hz) return buf;

  const long g = std::gcd(static_cast<long>(buf.sample_rate_hz),
                          static_cast<long>(target_hz));
  const long up = target_hz / g;
  const long down = buf.sample_rate_hz / g;

  // Cutoff relative to the input Nyquist.
  const double cutoff =
      opts.rolloff * std::min(1.0, static_cast<double>(up) / down);
  const double half_width = opts.half_taps / cutoff;  // in input samples
  const auto reach = static_cast<long>(std::ceil(half_width));
  const double i0_beta = std::cyl_bessel_i(0.0, opts.kaiser_beta);

  // One filter per output phase: phase p corresponds to a fractional input
  // position p/up.
  const long taps = 2 * reach + 1;
  std::vector<std::vector<double>> bank(static_cast<std::size_t>(up),
                                        std::vector<double>(taps, 0.0));
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / up;
    for (long k = -reach; k <= reach; ++k) {
      const double x = static_cast<double>(k) - frac;
      if (std::abs(x) > half_width) continue;
      const double arg = cutoff * x;
      const double sinc =
          arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      const double r = x / half_width;
      const double win =
          std::cyl_bessel_i(0.0, opts.kaiser_beta * std::sqrt(1.0 - r * r)) /
          i0_beta;
      bank[p][k + reach] = cutoff * sinc * win;
    }
    // Unity DC gain per phase.
    const double sum = std::accumulate(bank[p].begin(), bank[p].end(), 0.0);
    if (sum != 0.0)
      for (double& w : bank[p]) w /= sum;
  }

  const auto n_in = static_cast<long>(buf.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  AudioBuffer out{{}, target_hz, 1};
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long m = 0; m < n_out; ++m) {
    const long num = m * down;
    const long base = num / up;
    const long phase = num % up;
    const auto& h = bank[static_cast<std::size_t>(phase)];
    double acc = 0.0;
    for (long k = -reach; k <= reach; ++k) {
      const long idx = base + k;
      if (idx < 0 || idx >= n_in) continue;
      acc += h[k + reach] * buf.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  long double acc = 0.0L;
  for (double v : x) acc += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(acc / static_cast<long double>(x.size())));
}

inline LoudnessReport measure_dbfs(const AudioBuffer& buf) {
  if (buf.samples.empty())
    throw Error(ErrorCode::kInvalidArgument, "empty buffer");
  const double r = rms(buf.samples);
  if (r == 0.0)
    throw Error(ErrorCode::kSilentInput, "silent input has no finite dBFS");
  LoudnessReport rep;
  rep.dbfs = 20.0 * std::log10(r);
  for (double v : buf.samples)
    if (std::abs(v) > 1.0) ++rep.clipped_sample_count;
  return rep;
}

// Applies a single gain so the RMS level hits target_dbfs; samples pushed
// past full scale are hard-clipped and counted.
inline NormalizeResult normalize_loudness(
    const AudioBuffer& buf, double target_dbfs = kStandardLoudnessDbfs) {
  const double current_rms = rms(buf.samples);
  if (buf.samples.empty() || current_rms == 0.0)
    throw Error(ErrorCode::kSilentInput, "cannot normalize silent input");
  NormalizeResult res;
  res.report.dbfs = 20.0 * std::log10(current_rms);
  // target/current ratio directly, avoiding a log/exp round trip.
  double gain = std::pow(10.0, target_dbfs / 20.0) / current_rms;
  if (std::abs(gain - 1.0) < 1e-12) gain = 1.0;
  res.gain = gain;
  res.audio = buf;
  for (double& v : res.audio.samples) {
    v *= gain;
    if (v > 1.0) {
      v = 1.0;
      ++res.report.clipped_sample_count;
    } else if (v < -1.0) {
      v = -1.0;
      ++res.report.clipped_sample_count;
    }
  }
  return res;
}

}  // namespace convcurate
