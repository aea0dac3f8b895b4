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

// Synthetic conversation fixtures with ground-truth sidecars.
//
// Speakers are harmonic tones at distinct fundamentals with a syllable-rate
// amplitude envelope, which keeps per-speaker energy measurable in a
// mixture. A fixture on disk is <name>.wav (the mixture), <name>.json (the
// sidecar) and one clean track per speaker, tracks/<name>.<speaker>.wav.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "convcurate/audio.hpp"
#include "convcurate/error.hpp"
#include "convcurate/metrics/mixture.hpp"
#include "convcurate/metrics/rttm.hpp"
#include "convcurate/timeline.hpp"
#include "convcurate/wav.hpp"

namespace convcurate::fixtures {

inline constexpr const char* kSidecarSchema = "convcurate.fixture/1";

// Harmonic numbers measured per speaker. Fundamentals are chosen so that
// these harmonics stay well apart across speakers.
inline constexpr int kHarmonics = 3;
inline constexpr double kSpeakerF0[] = {117.0, 203.0, 289.0};

struct FixtureWord {
  std::string word;
  TimeInterval interval;
};

struct FixtureSegment {
  std::string speaker_id;
  TimeInterval interval;
  std::vector<FixtureWord> words;
  // Recognizer that loops on this segment, or empty.
  std::string hallucinate_model;
};

struct FixtureSpeaker {
  std::string id;
  double f0_hz = 0.0;
};

struct MusicRegion {
  TimeInterval interval;
  double prob = 0.0;
};

// Ground-truth geometry of a two-speaker overlap fixture.
struct OverlapTruth {
  std::string speaker1;
  std::string speaker2;
  double t_start = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double t_end = 0.0;
  double sir_db = 0.0;
  double overlap_ratio = 0.0;
};

struct Fixture {
  std::string name;
  int sample_rate_hz = kStandardSampleRate;
  std::vector<FixtureSpeaker> speakers;
  std::vector<FixtureSegment> segments;
  std::vector<MusicRegion> music;
  std::optional<OverlapTruth> overlap;
  // Clean per-speaker tracks on the mixture timeline.
  std::map<std::string, AudioBuffer> sources;
  AudioBuffer music_track;
  AudioBuffer mixture;

  double duration_s() const { return mixture.duration_s(); }
  const FixtureSpeaker* speaker(const std::string& id) const {
    for (const auto& s : speakers)
      if (s.id == id) return &s;
    return nullptr;
  }
};

// Deterministic generator. Draws are built from raw mt19937_64 output so
// the sequence does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

 private:
  std::mt19937_64 gen_;
};

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "about",  "after",  "again",   "always", "another", "around", "because", "before",
      "better", "both",   "call",    "came",   "come",    "could",  "day",     "did",
      "each",   "even",   "every",   "find",   "first",   "found",  "give",    "good",
      "great",  "hand",   "help",    "here",   "home",    "house",  "just",    "keep",
      "kind",   "know",   "large",   "last",   "left",    "like",   "little",  "long",
      "look",   "made",   "make",    "many",   "might",   "more",   "most",    "much",
      "must",   "name",   "never",   "new",    "next",    "night",  "number",  "old",
      "only",   "open",   "other",   "over",   "part",    "people", "place",   "point",
      "right",  "same",   "school",  "small",  "sound",   "still",  "story",   "study",
      "think",  "three",  "through", "time",   "today",   "water",  "where",   "world"};
  return words;
}

// Harmonic voice with a syllable envelope (about four syllables a second)
// and 10 ms fades at both ends.
inline AudioBuffer synth_voice(double f0_hz, double duration_s, std::uint64_t seed,
                               double amplitude = 0.12, int sample_rate_hz = kStandardSampleRate) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  const double rate = rng.uniform(3.5, 4.5);
  const double phase = rng.uniform(0.0, M_PI);
  double ph[kHarmonics];
  for (double& p : ph) p = rng.uniform(0.0, 2.0 * M_PI);
  const double amps[kHarmonics] = {1.0, 0.5, 0.25};
  const auto fade = static_cast<std::size_t>(0.010 * sample_rate_hz);
  AudioBuffer out{std::vector<double>(n, 0.0), sample_rate_hz, 1};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    const double env = 0.35 + 0.65 * std::abs(std::sin(M_PI * rate * t + phase));
    double v = 0.0;
    for (int h = 0; h < kHarmonics; ++h)
      v += amps[h] * std::sin(2.0 * M_PI * f0_hz * (h + 1) * t + ph[h]);
    double ramp = 1.0;
    if (i < fade) ramp = static_cast<double>(i) / static_cast<double>(fade);
    if (n - i <= fade) ramp = std::min(ramp, static_cast<double>(n - i - 1) / static_cast<double>(fade));
    out.samples[i] = amplitude * env * ramp * v / 1.75;
  }
  return out;
}

// Two steady tones standing in for background music.
inline AudioBuffer synth_music(double duration_s, double amplitude = 0.05,
                               int sample_rate_hz = kStandardSampleRate) {
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  AudioBuffer out{std::vector<double>(n, 0.0), sample_rate_hz, 1};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    out.samples[i] =
        amplitude * 0.5 * (std::sin(2.0 * M_PI * 440.0 * t) + std::sin(2.0 * M_PI * 660.0 * t));
  }
  return out;
}

// Roughly three words a second laid across the interval.
inline std::vector<FixtureWord> synth_words(const TimeInterval& iv, Rng& rng) {
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(iv.duration() * 3.0)));
  const double slot = iv.duration() / static_cast<double>(count);
  std::vector<FixtureWord> out;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = iv.start_s + slot * static_cast<double>(k);
    out.push_back({vocabulary()[rng.index(vocabulary().size())], {s + 0.1 * slot, s + 0.9 * slot}});
  }
  return out;
}

namespace detail {

inline void add_into(AudioBuffer& dst, const AudioBuffer& src, std::size_t offset,
                     double gain = 1.0) {
  if (dst.samples.size() < offset + src.samples.size())
    dst.samples.resize(offset + src.samples.size(), 0.0);
  for (std::size_t i = 0; i < src.samples.size(); ++i) dst.samples[offset + i] += gain * src.samples[i];
}

inline std::size_t at(double t, int sr) { return static_cast<std::size_t>(std::llround(t * sr)); }

// Brings every track and the mixture to a common length and rebuilds the
// mixture as the sum of sources and music.
inline void finish(Fixture& fx, double total_s) {
  const auto n = at(total_s, fx.sample_rate_hz);
  for (auto& [id, src] : fx.sources) src.samples.resize(n, 0.0);
  if (!fx.music_track.samples.empty()) fx.music_track.samples.resize(n, 0.0);
  fx.mixture = AudioBuffer{std::vector<double>(n, 0.0), fx.sample_rate_hz, 1};
  for (const auto& [id, src] : fx.sources)
    for (std::size_t i = 0; i < n; ++i) fx.mixture.samples[i] += src.samples[i];
  if (!fx.music_track.samples.empty())
    for (std::size_t i = 0; i < n; ++i) fx.mixture.samples[i] += fx.music_track.samples[i];
  std::stable_sort(fx.segments.begin(), fx.segments.end(), [](const auto& a, const auto& b) {
    return a.interval.start_s < b.interval.start_s;
  });
}

}  // namespace detail

inline std::string speaker_name(std::size_t k) { return "spk" + std::to_string(k); }

// Two solo utterances (references for each speaker) followed by one
// controlled overlap built with synth_overlap_mixture.
inline Fixture make_overlap_fixture(const std::string& name, double sir_db, double overlap_ratio,
                                    std::uint64_t seed) {
  Rng rng(seed);
  Fixture fx;
  fx.name = name;
  const int sr = fx.sample_rate_hz;
  for (std::size_t k = 0; k < 2; ++k) fx.speakers.push_back({speaker_name(k), kSpeakerF0[k]});
  for (const auto& s : fx.speakers) fx.sources[s.id] = AudioBuffer{{}, sr, 1};

  double t = 0.5;
  for (std::size_t k = 0; k < 2; ++k) {
    const double d = rng.uniform(2.6, 3.4);
    auto v = synth_voice(fx.speakers[k].f0_hz, d, seed * 31 + k);
    detail::add_into(fx.sources[fx.speakers[k].id], v, detail::at(t, sr));
    const TimeInterval iv{t, t + v.duration_s()};
    fx.segments.push_back({fx.speakers[k].id, iv, synth_words(iv, rng), {}});
    t = iv.end_s + 0.6;
  }

  const double d1 = rng.uniform(3.5, 5.0), d2 = rng.uniform(3.5, 5.0);
  auto s1 = synth_voice(fx.speakers[0].f0_hz, d1, seed * 31 + 7);
  auto s2 = synth_voice(fx.speakers[1].f0_hz, d2, seed * 31 + 8);
  const auto m = metrics::synth_overlap_mixture(s1, s2, sir_db, overlap_ratio);
  const auto base = detail::at(t, sr);
  const double t0 = static_cast<double>(base) / sr;
  detail::add_into(fx.sources[fx.speakers[0].id], m.source1, base);
  detail::add_into(fx.sources[fx.speakers[1].id], m.source2, base);
  OverlapTruth truth{fx.speakers[0].id, fx.speakers[1].id, t0 + m.t_start, t0 + m.t1,
                     t0 + m.t2, t0 + m.t_end, sir_db, overlap_ratio};
  const TimeInterval a{truth.t_start, truth.t2}, b{truth.t1, truth.t_end};
  fx.segments.push_back({truth.speaker1, a, synth_words(a, rng), {}});
  fx.segments.push_back({truth.speaker2, b, synth_words(b, rng), {}});
  fx.overlap = truth;
  detail::finish(fx, truth.t_end + 0.5);
  return fx;
}

struct ConversationOptions {
  double duration_s = 120.0;
  std::size_t speakers = 2;
  // Probability that a turn starts before the previous one ends.
  double overlap_prob = 0.2;
  double backchannel_prob = 0.1;
  // Music bed over this interval, if non-empty.
  TimeInterval music{};
  double music_prob = 0.8;
  // Turn index whose transcript a recognizer loops on; -1 for none.
  int hallucination_turn = -1;
  std::string hallucinate_model = "whisper";
};

// Alternating turns with occasional overlaps and short backchannels. The
// first turn of every speaker is a clean stretch of at least 2.5 s.
inline Fixture make_conversation(const std::string& name, const ConversationOptions& opt,
                                 std::uint64_t seed) {
  Rng rng(seed);
  Fixture fx;
  fx.name = name;
  const int sr = fx.sample_rate_hz;
  const std::size_t nspk = std::clamp<std::size_t>(opt.speakers, 1, 3);
  for (std::size_t k = 0; k < nspk; ++k) fx.speakers.push_back({speaker_name(k), kSpeakerF0[k]});
  for (const auto& s : fx.speakers) fx.sources[s.id] = AudioBuffer{{}, sr, 1};

  auto place = [&](std::size_t spk, double start, double dur, std::uint64_t vseed) {
    auto v = synth_voice(fx.speakers[spk].f0_hz, dur, vseed);
    const auto off = detail::at(start, sr);
    detail::add_into(fx.sources[fx.speakers[spk].id], v, off);
    const double s0 = static_cast<double>(off) / sr;
    return TimeInterval{s0, s0 + v.duration_s()};
  };

  double t = 0.6;
  std::size_t prev = nspk - 1;
  int turn = 0;
  const double stop = opt.duration_s - 1.0;
  while (t < stop) {
    std::size_t spk = (prev + 1) % nspk;
    if (turn >= static_cast<int>(nspk) && nspk > 2 && rng.uniform() < 0.3)
      spk = (prev + 2) % nspk;
    const bool intro = turn < static_cast<int>(nspk);
    double dur = intro ? rng.uniform(2.6, 4.0) : rng.uniform(1.2, 7.0);
    if (!intro && rng.uniform() < 0.08) dur = rng.uniform(10.5, 12.0);
    dur = std::min(dur, stop - t);
    if (dur < 0.6) break;
    const auto iv = place(spk, t, dur, seed * 1009 + static_cast<std::uint64_t>(turn));
    FixtureSegment seg{fx.speakers[spk].id, iv, synth_words(iv, rng), {}};
    if (turn == opt.hallucination_turn) seg.hallucinate_model = opt.hallucinate_model;
    fx.segments.push_back(std::move(seg));

    if (!intro && nspk > 1 && dur > 3.0 && rng.uniform() < opt.backchannel_prob) {
      const std::size_t other = (spk + 1) % nspk;
      const double bs = iv.start_s + rng.uniform(1.0, iv.duration() - 1.5);
      const auto biv = place(other, bs, rng.uniform(0.4, 0.9),
                             seed * 2003 + static_cast<std::uint64_t>(turn));
      fx.segments.push_back({fx.speakers[other].id, biv, synth_words(biv, rng), {}});
    }
    const bool overlap = !intro && rng.uniform() < opt.overlap_prob;
    t = overlap ? iv.end_s - rng.uniform(0.3, std::min(1.2, 0.4 * dur)) : iv.end_s + rng.uniform(0.2, 1.5);
    prev = spk;
    ++turn;
  }
  if (!opt.music.empty()) {
    const auto bed = synth_music(opt.music.duration());
    fx.music_track = AudioBuffer{{}, sr, 1};
    detail::add_into(fx.music_track, bed, detail::at(opt.music.start_s, sr));
    fx.music.push_back({opt.music, opt.music_prob});
  }
  detail::finish(fx, opt.duration_s);
  return fx;
}

// ---------------------------------------------------------------------------
// Sidecar I/O

inline nlohmann::json interval_json(const TimeInterval& iv) {
  return {{"start_s", iv.start_s}, {"end_s", iv.end_s}};
}

inline TimeInterval interval_from(const nlohmann::json& j) {
  return {j.at("start_s").get<double>(), j.at("end_s").get<double>()};
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& audio) {
  auto p = audio;
  return p.replace_extension(".json");
}

// Clean tracks live in a tracks/ subdirectory so that a directory scan for
// inputs only sees mixtures.
inline std::string track_name(const std::string& fixture, const std::string& speaker) {
  return "tracks/" + fixture + "." + speaker + ".wav";
}

inline nlohmann::json sidecar_json(const Fixture& fx) {
  nlohmann::json j;
  j["schema"] = kSidecarSchema;
  j["name"] = fx.name;
  j["sample_rate_hz"] = fx.sample_rate_hz;
  j["duration_s"] = fx.duration_s();
  auto& spk = j["speakers"] = nlohmann::json::array();
  for (const auto& s : fx.speakers)
    spk.push_back({{"id", s.id}, {"f0_hz", s.f0_hz}, {"track", track_name(fx.name, s.id)}});
  auto& segs = j["segments"] = nlohmann::json::array();
  for (const auto& s : fx.segments) {
    nlohmann::json js = interval_json(s.interval);
    js["speaker_id"] = s.speaker_id;
    auto& words = js["words"] = nlohmann::json::array();
    for (const auto& w : s.words) {
      auto jw = interval_json(w.interval);
      jw["word"] = w.word;
      words.push_back(jw);
    }
    if (!s.hallucinate_model.empty()) js["hallucinate_model"] = s.hallucinate_model;
    segs.push_back(js);
  }
  auto& music = j["music"] = nlohmann::json::array();
  for (const auto& m : fx.music) {
    auto jm = interval_json(m.interval);
    jm["prob"] = m.prob;
    music.push_back(jm);
  }
  if (fx.overlap) {
    const auto& o = *fx.overlap;
    j["overlap"] = {{"speaker1", o.speaker1}, {"speaker2", o.speaker2}, {"t_start", o.t_start},
                    {"t1", o.t1}, {"t2", o.t2}, {"t_end", o.t_end}, {"sir_db", o.sir_db},
                    {"overlap_ratio", o.overlap_ratio}};
  }
  return j;
}

// Writes <dir>/<name>.wav, the JSON and RTTM sidecars and one clean track
// per speaker.
// Tracks are written after 16-bit quantization, so the mixture file is the
// quantized sum of the quantized sources (and music).
inline std::filesystem::path write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto wav = dir / (fx.name + ".wav");
  AudioBuffer mix{std::vector<double>(fx.mixture.samples.size(), 0.0), fx.sample_rate_hz, 1};
  for (const auto& [id, src] : fx.sources) {
    const auto q = quantize(src);
    std::filesystem::create_directories(dir / "tracks");
    write_wav(dir / track_name(fx.name, id), q);
    for (std::size_t i = 0; i < q.samples.size(); ++i) mix.samples[i] += q.samples[i];
  }
  if (!fx.music_track.samples.empty()) {
    const auto q = quantize(fx.music_track);
    for (std::size_t i = 0; i < q.samples.size(); ++i) mix.samples[i] += q.samples[i];
  }
  write_wav(wav, mix);
  std::ofstream(sidecar_path(wav)) << sidecar_json(fx).dump(2) << "\n";
  std::vector<metrics::RttmSegment> truth;
  for (const auto& s : fx.segments) truth.push_back({fx.name, s.speaker_id, s.interval});
  std::ofstream rttm(dir / (fx.name + ".rttm"));
  metrics::write_rttm(rttm, truth);
  return wav;
}

// Loads a fixture back from disk; the music track is not stored, only its
// regions.
inline Fixture load_fixture(const std::filesystem::path& wav) {
  const auto side = sidecar_path(wav);
  std::ifstream in(side);
  if (!in) throw Error(ErrorCode::kIo, "missing fixture sidecar " + side.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kSchema, side.string() + ": " + e.what());
  }
  if (j.value("schema", "") != kSidecarSchema)
    throw Error(ErrorCode::kSchema, side.string() + ": unknown sidecar schema");
  Fixture fx;
  try {
    fx.name = j.at("name").get<std::string>();
    fx.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    for (const auto& s : j.at("speakers")) {
      fx.speakers.push_back({s.at("id").get<std::string>(), s.at("f0_hz").get<double>()});
      fx.sources[fx.speakers.back().id] = read_wav(wav.parent_path() / s.at("track").get<std::string>());
    }
    for (const auto& s : j.at("segments")) {
      FixtureSegment seg{s.at("speaker_id").get<std::string>(), interval_from(s), {},
                         s.value("hallucinate_model", "")};
      for (const auto& w : s.at("words"))
        seg.words.push_back({w.at("word").get<std::string>(), interval_from(w)});
      fx.segments.push_back(std::move(seg));
    }
    for (const auto& m : j.at("music")) fx.music.push_back({interval_from(m), m.at("prob").get<double>()});
    if (j.contains("overlap")) {
      const auto& o = j["overlap"];
      fx.overlap = OverlapTruth{o.at("speaker1").get<std::string>(), o.at("speaker2").get<std::string>(),
                                o.at("t_start").get<double>(), o.at("t1").get<double>(),
                                o.at("t2").get<double>(), o.at("t_end").get<double>(),
                                o.at("sir_db").get<double>(), o.at("overlap_ratio").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, side.string() + ": " + e.what());
  }
  fx.mixture = read_wav(wav);
  return fx;
}

// Overlap grid: SIR {0, 5, 10} dB x overlap ratio {0.2, 0.5, 1.0} x 3 seeds.
inline std::vector<Fixture> overlap_grid() {
  std::vector<Fixture> out;
  for (int sir : {0, 5, 10})
    for (int rho10 : {2, 5, 10})
      for (int seed = 0; seed < 3; ++seed) {
        const std::string name = "ovl_sir" + std::to_string(sir) + "_rho" +
                                 (rho10 == 10 ? std::string("10") : "0" + std::to_string(rho10)) +
                                 "_s" + std::to_string(seed);
        out.push_back(make_overlap_fixture(name, sir, rho10 / 10.0,
                                           1000u + static_cast<std::uint64_t>(sir * 100 + rho10 * 10 + seed)));
      }
  return out;
}

// The standard corpus: the overlap grid plus three conversations.
inline std::vector<Fixture> standard_corpus() {
  auto out = overlap_grid();
  ConversationOptions a;
  a.duration_s = 120.0;
  a.music = {40.0, 70.0};
  a.hallucination_turn = 7;
  out.push_back(make_conversation("conv_120s_2spk", a, 7));
  ConversationOptions b;
  b.duration_s = 60.0;
  b.speakers = 3;
  out.push_back(make_conversation("conv_60s_3spk", b, 11));
  ConversationOptions c;
  c.duration_s = 90.0;
  c.overlap_prob = 0.35;
  c.backchannel_prob = 0.3;
  out.push_back(make_conversation("conv_90s_dense", c, 13));
  return out;
}

}  // namespace convcurate::fixtures
