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

// Deterministic stand-ins for every task kind, driven by fixture sidecars.
// Each response is a pure function of the request and the mock options.
// The fixture is found through the request's "source" param; the payload's
// position in the source comes from "source_start_s" (or the file
// reference), and "source_gain" is the gain applied during
// standardization.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "convcurate/dispatcher.hpp"
#include "convcurate/fixtures.hpp"
#include "convcurate/protocol.hpp"
#include "convcurate/wav.hpp"

namespace convcurate::mock {

struct MockOptions {
  // Per-word substitution probability for every recognizer.
  double asr_noise = 0.0;
  std::uint64_t seed = 20260101;
  std::vector<std::string> asr_models{"canary", "parakeet", "whisper"};
  std::size_t embedding_dim = 16;
  // Artificial per-request delay.
  std::chrono::milliseconds latency{0};
  std::set<TaskKind> kinds{kAllTaskKinds.begin(), kAllTaskKinds.end()};
  // Kinds and recognizers that answer with an error.
  std::set<TaskKind> failing_kinds;
  std::set<std::string> failing_models;
};

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double unit_hash(std::uint64_t x) { return static_cast<double>(mix64(x) >> 11) * 0x1.0p-53; }

// Seeded unit vector for a speaker label.
inline std::vector<double> speaker_vector(const std::string& speaker, std::size_t dim,
                                          std::uint64_t seed) {
  fixtures::Rng rng(mix64(seed ^ fnv1a(speaker)));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Power of x at frequency f (Goertzel).
inline double goertzel_power(const std::vector<double>& x, double f, int sr) {
  const double w = 2.0 * M_PI * f / sr;
  const double c = 2.0 * std::cos(w);
  double s1 = 0.0, s2 = 0.0;
  for (double v : x) {
    const double s0 = v + c * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - c * s1 * s2;
}

// Thread-safe cache of fixtures and audio files. Fixtures can also be
// registered in memory under any source key.
class FixtureStore {
 public:
  std::shared_ptr<const fixtures::Fixture> fixture(const std::string& source) {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = fixtures_.find(source); it != fixtures_.end()) return it->second;
    auto fx = std::make_shared<const fixtures::Fixture>(fixtures::load_fixture(source));
    fixtures_[source] = fx;
    return fx;
  }

  void add(const std::string& source, fixtures::Fixture fx) {
    std::lock_guard<std::mutex> lock(mu_);
    fixtures_[source] = std::make_shared<const fixtures::Fixture>(std::move(fx));
  }

  std::shared_ptr<const AudioBuffer> audio(const std::string& path) {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = audio_.find(path); it != audio_.end()) return it->second;
    auto a = std::make_shared<const AudioBuffer>(read_wav(path));
    audio_[path] = a;
    return a;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const fixtures::Fixture>> fixtures_;
  std::map<std::string, std::shared_ptr<const AudioBuffer>> audio_;
};

// Deterministic processing cost, seconds per second of payload audio.
inline double cost_factor(TaskKind kind, const std::string& model) {
  switch (kind) {
    case TaskKind::kVad: return 0.0025;
    case TaskKind::kDiarize: return 0.0125;
    case TaskKind::kSeparate2: return 0.0200;
    case TaskKind::kEmbed: return 0.0050;
    case TaskKind::kTagAudio: return 0.0025;
    case TaskKind::kExtractVocals: return 0.0300;
    case TaskKind::kDenoise: return 0.0400;
    case TaskKind::kAsr:
      return model == "whisper" ? 0.0500 : model == "canary" ? 0.0375 : 0.0250;
    case TaskKind::kCaption: return 0.0500;
  }
  return 0.0;
}

class MockBackend : public Backend {
 public:
  explicit MockBackend(std::shared_ptr<FixtureStore> store, MockOptions opt = {})
      : store_(std::move(store)), opt_(std::move(opt)) {}

  Hello hello() override {
    Hello h;
    for (auto k : opt_.kinds) {
      Capability c{k, {}};
      if (k == TaskKind::kAsr) c.models = opt_.asr_models;
      h.capabilities.push_back(std::move(c));
    }
    return h;
  }

  TaskResponse call(const TaskRequest& req) override {
    if (opt_.latency.count() > 0) std::this_thread::sleep_for(opt_.latency);
    const std::string model = req.params.value("model_id", "");
    if (!opt_.kinds.count(req.kind))
      return TaskResponse::failure(req, "capability", std::string("kind not served: ") + to_string(req.kind));
    if (req.kind == TaskKind::kAsr &&
        std::find(opt_.asr_models.begin(), opt_.asr_models.end(), model) == opt_.asr_models.end())
      return TaskResponse::failure(req, "capability", "unknown model_id '" + model + "'");
    if (opt_.failing_kinds.count(req.kind) || opt_.failing_models.count(model))
      return TaskResponse::failure(req, "backend", "injected failure");
    try {
      Ctx c = context(req);
      TaskResponse resp;
      resp.request_id = req.request_id;
      resp.kind = req.kind;
      resp.outcome = run(req, c, model);
      resp.timing_s = c.audio.duration_s() * cost_factor(req.kind, model);
      return resp;
    } catch (const std::exception& e) {
      return TaskResponse::failure(req, "fixture", e.what());
    }
  }

 private:
  struct Ctx {
    AudioBuffer audio;
    double start_s = 0.0;
    double gain = 1.0;
    std::shared_ptr<const fixtures::Fixture> fx;
  };

  Ctx context(const TaskRequest& req) {
    Ctx c;
    if (const auto* f = std::get_if<FileRef>(&req.payload)) {
      c.audio = slice(*store_->audio(f->path), f->interval);
      c.start_s = f->interval.start_s;
    } else {
      c.audio = std::get<InlinePcm>(req.payload).audio;
    }
    if (req.params.contains("source_start_s")) c.start_s = req.params["source_start_s"].get<double>();
    c.gain = req.params.value("source_gain", 1.0);
    const bool needs_fixture = req.kind != TaskKind::kVad && req.kind != TaskKind::kDenoise &&
                               req.kind != TaskKind::kCaption;
    if (needs_fixture) {
      if (!req.params.contains("source"))
        throw Error(ErrorCode::kInvalidArgument, "request lacks the 'source' param");
      c.fx = store_->fixture(req.params["source"].get<std::string>());
    }
    return c;
  }

  TaskPayload run(const TaskRequest& req, const Ctx& c, const std::string& model) {
    const TimeInterval span{c.start_s, c.start_s + c.audio.duration_s()};
    switch (req.kind) {
      case TaskKind::kVad: return vad(c.audio);
      case TaskKind::kDiarize: {
        DiarizeResult d;
        for (const auto& s : c.fx->segments)
          if (auto x = intersect(s.interval, span))
            d.segments.push_back({s.speaker_id, {x->start_s - span.start_s, x->end_s - span.start_s}, "", ""});
        return d;
      }
      case TaskKind::kSeparate2: return separate(c, span);
      case TaskKind::kEmbed: return embed(c);
      case TaskKind::kTagAudio: {
        double p = 0.02;
        for (const auto& m : c.fx->music)
          if (auto x = intersect(m.interval, span))
            p = std::max(p, m.prob * x->duration() / span.duration());
        return TagResult{p};
      }
      case TaskKind::kExtractVocals: {
        AudioResult r{AudioBuffer{std::vector<double>(c.audio.samples.size(), 0.0), c.audio.sample_rate_hz, 1}};
        for (const auto& [id, src] : c.fx->sources) add_source(r.audio, src, c);
        return r;
      }
      case TaskKind::kDenoise: return AudioResult{c.audio};
      case TaskKind::kAsr: return asr(req, c, span, model);
      case TaskKind::kCaption: {
        std::size_t n = 0;
        if (req.params.contains("context") && req.params["context"].is_array())
          n = req.params["context"].size();
        return CaptionResult{"caption(context=" + std::to_string(n) + ")"};
      }
    }
    throw Error(ErrorCode::kInvalidArgument, "unhandled task kind");
  }

  // Frame level from RMS: 0 at -45 dBFS, 1 at -25 dBFS.
  static VadFrameSeries vad(const AudioBuffer& a) {
    VadFrameSeries v;
    v.hop_s = 0.02;
    const auto hop = static_cast<std::size_t>(std::llround(v.hop_s * a.sample_rate_hz));
    for (std::size_t i = 0; i + hop <= a.samples.size(); i += hop) {
      const double r = rms(std::span<const double>(a.samples.data() + i, hop));
      const double db = r > 0.0 ? 20.0 * std::log10(r) : -200.0;
      v.probs.push_back(std::clamp((db + 45.0) / 20.0, 0.0, 1.0));
    }
    return v;
  }

  // Adds gain * src over the payload's sample range into dst.
  static void add_source(AudioBuffer& dst, const AudioBuffer& src, const Ctx& c) {
    const auto lo = std::llround(c.start_s * src.sample_rate_hz);
    for (std::size_t i = 0; i < dst.samples.size(); ++i) {
      const auto k = lo + static_cast<std::int64_t>(i);
      if (k >= 0 && k < static_cast<std::int64_t>(src.samples.size()))
        dst.samples[i] += c.gain * src.samples[static_cast<std::size_t>(k)];
    }
  }

  // The two speakers most active in the span, returned in an order that
  // depends on the span (so callers cannot rely on it).
  SeparateResult separate(const Ctx& c, const TimeInterval& span) {
    std::map<std::string, double> active;
    for (const auto& s : c.fx->segments)
      if (auto x = intersect(s.interval, span)) active[s.speaker_id] += x->duration();
    std::vector<std::pair<std::string, double>> ranked(active.begin(), active.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    SeparateResult r;
    for (std::size_t k = 0; k < 2; ++k) {
      r.sources[k] = AudioBuffer{std::vector<double>(c.audio.samples.size(), 0.0), c.audio.sample_rate_hz, 1};
      if (k < ranked.size()) add_source(r.sources[k], c.fx->sources.at(ranked[k].first), c);
    }
    const auto key = fnv1a(std::to_string(std::llround(span.start_s * 1000.0)), opt_.seed);
    if (mix64(key) & 1u) std::swap(r.sources[0], r.sources[1]);
    return r;
  }

  EmbedResult embed(const Ctx& c) {
    std::vector<double> out(opt_.embedding_dim, 0.0);
    std::vector<double> power;
    double total = 0.0;
    for (const auto& spk : c.fx->speakers) {
      double p = 0.0;
      for (int h = 1; h <= fixtures::kHarmonics; ++h)
        p += goertzel_power(c.audio.samples, spk.f0_hz * h, c.audio.sample_rate_hz);
      power.push_back(p);
      total += p;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::kSilentInput, "no speaker energy in payload");
    for (std::size_t k = 0; k < c.fx->speakers.size(); ++k) {
      const auto u = speaker_vector(c.fx->speakers[k].id, opt_.embedding_dim, opt_.seed);
      for (std::size_t d = 0; d < out.size(); ++d) out[d] += power[k] / total * u[d];
    }
    double norm = 0.0;
    for (double x : out) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : out) x /= norm;
    return EmbedResult{out};
  }

  // Sidecar words whose midpoint lies in the span, restricted to
  // "speaker_hint" when given, with seeded substitutions.
  AsrResult asr(const TaskRequest& req, const Ctx& c, const TimeInterval& span, const std::string& model) {
    const std::string hint = req.params.value("speaker_hint", "");
    const std::string source = req.params.value("source", "");
    AsrResult r{model, {}};
    bool loop = false;
    for (const auto& seg : c.fx->segments) {
      if (!hint.empty() && seg.speaker_id != hint) continue;
      for (const auto& w : seg.words) {
        const double mid = 0.5 * (w.interval.start_s + w.interval.end_s);
        if (mid < span.start_s || mid >= span.end_s) continue;
        if (seg.hallucinate_model == model) loop = true;
        std::string surface = w.word;
        const auto key = fnv1a(model + "|" + source + "|" + std::to_string(std::llround(w.interval.start_s * 1e4)),
                               opt_.seed);
        if (unit_hash(key) < opt_.asr_noise) {
          const auto& vocab = fixtures::vocabulary();
          auto pick = vocab[mix64(key ^ 0x5bd1e995u) % vocab.size()];
          if (pick == surface) pick = vocab[(mix64(key ^ 0x5bd1e995u) + 1) % vocab.size()];
          surface = pick;
        }
        r.words.push_back({surface, TimeInterval{w.interval.start_s - span.start_s,
                                                 w.interval.end_s - span.start_s}});
      }
    }
    if (loop) {
      // Looped hallucination: the same word a hundred times over the span.
      r.words.clear();
      const double step = span.duration() / 100.0;
      for (int k = 0; k < 100; ++k)
        r.words.push_back({k % 3 == 2 ? "Yeah..." : "Yeah.", TimeInterval{k * step, (k + 0.9) * step}});
    }
    return r;
  }

  std::shared_ptr<FixtureStore> store_;
  MockOptions opt_;
};

}  // namespace convcurate::mock
