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

// RIFF WAV reader/writer for little-endian signed 16-bit PCM.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"

namespace convcurate {

namespace wav_detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

// Round half away from zero onto the signed 16-bit grid.
inline std::int16_t quantize_pcm16(double v) {
  const double scaled = std::round(v * 32768.0);
  if (scaled > 32767.0) return 32767;
  if (scaled < -32768.0) return -32768;
  return static_cast<std::int16_t>(scaled);
}

inline double dequantize_pcm16(std::int16_t v) { return v / 32768.0; }

// Snaps every sample onto the 16-bit grid, matching what a write/read
// round trip would produce.
inline AudioBuffer quantize(AudioBuffer buf) {
  for (double& v : buf.samples) v = dequantize_pcm16(quantize_pcm16(v));
  return buf;
}

inline std::vector<std::uint8_t> encode_wav(const AudioBuffer& buf) {
  using namespace wav_detail;
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  const char* riff = "RIFF";
  out.insert(out.end(), riff, riff + 4);
  put_u32(out, 36 + data_bytes);
  const char* wave_fmt = "WAVEfmt ";
  out.insert(out.end(), wave_fmt, wave_fmt + 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(buf.channel_count));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate_hz * buf.channel_count * 2));
  put_u16(out, static_cast<std::uint16_t>(buf.channel_count * 2));
  put_u16(out, 16);
  const char* data = "data";
  out.insert(out.end(), data, data + 4);
  put_u32(out, data_bytes);
  for (double v : buf.samples) {
    const auto q = static_cast<std::uint16_t>(quantize_pcm16(v));
    put_u16(out, q);
  }
  return out;
}

inline AudioBuffer decode_wav(const std::vector<std::uint8_t>& bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::kIo, "not a RIFF/WAVE file");
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0, format = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = get_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(hdr, "data", 4) != 0)
      throw Error(ErrorCode::kIo, "truncated WAV chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::kIo, "short fmt chunk");
      format = get_u16(bytes.data() + body);
      channels = get_u16(bytes.data() + body + 2);
      rate = static_cast<int>(get_u32(bytes.data() + body + 4));
      bits = get_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && size >= 26)  // WAVE_FORMAT_EXTENSIBLE
        format = get_u16(bytes.data() + body + 24);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorCode::kIo, "data chunk before fmt");
      if (format != 1 || bits != 16)
        throw Error(ErrorCode::kIo, "only 16-bit PCM WAV is supported");
      if (channels < 1 || rate < 1)
        throw Error(ErrorCode::kIo, "invalid WAV format fields");
      // Streams written with an unknown length report 0 or 0xFFFFFFFF.
      std::size_t avail = bytes.size() - body;
      std::size_t n = std::min<std::size_t>(size, avail);
      n -= n % static_cast<std::size_t>(2 * channels);
      AudioBuffer buf{{}, rate, channels};
      buf.samples.resize(n / 2);
      for (std::size_t i = 0; i < buf.samples.size(); ++i)
        buf.samples[i] = dequantize_pcm16(
            static_cast<std::int16_t>(get_u16(bytes.data() + body + 2 * i)));
      return buf;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::kIo, "WAV file has no data chunk");
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

inline void write_wav(const std::filesystem::path& path, const AudioBuffer& buf) {
  const auto bytes = encode_wav(buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

}  // namespace convcurate
