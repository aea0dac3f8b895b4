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

#include <cmath>
#include <limits>

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"

namespace convcurate::metrics {

// Residual energy at or below this fraction of the target energy (above
// 200 dB) is treated as exact reconstruction.
inline constexpr double kSiSdrExactRatio = 1e-20;

// Scale-invariant SDR in dB; +inf when the estimate is an exact rescaling
// of the reference.
inline double si_sdr(const AudioBuffer& estimate, const AudioBuffer& reference) {
  if (estimate.samples.size() != reference.samples.size())
    throw Error(ErrorCode::kLengthMismatch, "si_sdr needs equal lengths");
  long double dot = 0.0L, ref_energy = 0.0L;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    dot += static_cast<long double>(estimate.samples[i]) * reference.samples[i];
    ref_energy += static_cast<long double>(reference.samples[i]) * reference.samples[i];
  }
  if (ref_energy == 0.0L) throw Error(ErrorCode::kSilentInput, "si_sdr reference is silent");
  const long double alpha = dot / ref_energy;
  long double target = 0.0L, residual = 0.0L;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const long double t = alpha * reference.samples[i];
    const long double e = t - estimate.samples[i];
    target += t * t;
    residual += e * e;
  }
  if (residual <= kSiSdrExactRatio * target) return std::numeric_limits<double>::infinity();
  if (target == 0.0L) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(10.0L * std::log10(target / residual));
}

}  // namespace convcurate::metrics
