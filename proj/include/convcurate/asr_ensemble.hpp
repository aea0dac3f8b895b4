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

// ROVER-style combination of several ASR hypotheses.
//
// Hypotheses are aligned one at a time into a word transition network
// (WTN): an ordered list of slots, each holding one entry per model (a word
// or EPS). Voting then walks the slots. A word backed by at least
// min_agreement models wins; otherwise the primary model's entry is kept.

#pragma once

#include <algorithm>
#include <cctype>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/flags.hpp"
#include "convcurate/protocol.hpp"
#include "convcurate/task_context.hpp"
#include "convcurate/timeline.hpp"

namespace convcurate {

struct WordToken {
  std::string surface;
  std::string normalized;
  std::optional<TimeInterval> interval;
  std::string model_id;

  friend bool operator==(const WordToken&, const WordToken&) = default;
};

struct Hypothesis {
  std::string model_id;
  bool is_primary = false;
  std::vector<WordToken> words;
};

// An absent entry is EPS.
using WtnSlot = std::vector<std::optional<WordToken>>;

struct WordTransitionNetwork {
  std::vector<std::string> model_ids;  // entry order inside every slot
  std::string primary_model;
  std::vector<WtnSlot> slots;

  std::optional<std::size_t> model_index(const std::string& id) const {
    for (std::size_t i = 0; i < model_ids.size(); ++i)
      if (model_ids[i] == id) return i;
    return std::nullopt;
  }
};

struct RepetitionReport {
  int n = 15;
  int max_count = 0;
  std::optional<std::vector<std::string>> offending_ngram;
  bool discarded = false;
};

inline constexpr int kDefaultRepetitionN = 15;
inline constexpr int kDefaultRepetitionCount = 5;
inline constexpr int kDefaultMinAgreement = 2;

// ASCII case folding; leading/trailing ASCII punctuation removed, inner
// characters (apostrophes, hyphens) kept. Non-ASCII bytes pass through.
inline std::string normalize_word(std::string_view surface) {
  auto is_punct = [](char c) {
    return static_cast<unsigned char>(c) < 0x80 &&
           (std::ispunct(static_cast<unsigned char>(c)) ||
            std::isspace(static_cast<unsigned char>(c)));
  };
  std::size_t b = 0, e = surface.size();
  while (b < e && is_punct(surface[b])) ++b;
  while (e > b && is_punct(surface[e - 1])) --e;
  std::string out(surface.substr(b, e - b));
  for (char& c : out)
    if (static_cast<unsigned char>(c) < 0x80)
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline WordToken make_token(std::string surface, std::string model_id,
                            std::optional<TimeInterval> interval = std::nullopt) {
  WordToken t;
  t.normalized = normalize_word(surface);
  t.surface = std::move(surface);
  t.model_id = std::move(model_id);
  t.interval = interval;
  return t;
}

// Builds a hypothesis from whitespace-separated text (tests, fixtures).
inline Hypothesis hypothesis_from_text(const std::string& model_id, std::string_view text,
                                       bool is_primary = false) {
  Hypothesis h{model_id, is_primary, {}};
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) h.words.push_back(make_token(std::string(text.substr(i, j - i)), model_id));
    i = j;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Alignment

// Minimum-edit alignment of `hyp` against the network (match 0, substitution,
// insertion and deletion 1). A slot matches when any of its words equals the
// hypothesis word. Ties prefer match/substitution, then deletion, then
// insertion, scanning back from the end.
inline WordTransitionNetwork align_hypothesis(WordTransitionNetwork wtn, const Hypothesis& hyp) {
  if (wtn.model_index(hyp.model_id))
    throw Error(ErrorCode::kInvalidArgument, "model " + hyp.model_id + " already aligned");
  const std::size_t prior = wtn.model_ids.size();
  wtn.model_ids.push_back(hyp.model_id);
  if (hyp.is_primary) wtn.primary_model = hyp.model_id;

  const auto& words = hyp.words;
  const std::size_t n = wtn.slots.size();
  const std::size_t m = words.size();

  auto cost = [&](std::size_t j, std::size_t i) {
    for (const auto& e : wtn.slots[j])
      if (e && e->normalized == words[i].normalized) return 0;
    return 1;
  };

  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t j = 0; j <= n; ++j) d[j][0] = static_cast<int>(j);
  for (std::size_t i = 0; i <= m; ++i) d[0][i] = static_cast<int>(i);
  for (std::size_t j = 1; j <= n; ++j)
    for (std::size_t i = 1; i <= m; ++i)
      d[j][i] = std::min({d[j - 1][i - 1] + cost(j - 1, i - 1), d[j - 1][i] + 1, d[j][i - 1] + 1});

  std::vector<WtnSlot> rev;
  rev.reserve(n + m);
  std::size_t j = n, i = m;
  while (j > 0 || i > 0) {
    if (j > 0 && i > 0 && d[j][i] == d[j - 1][i - 1] + cost(j - 1, i - 1)) {
      auto slot = wtn.slots[j - 1];
      slot.push_back(words[i - 1]);
      rev.push_back(std::move(slot));
      --j;
      --i;
    } else if (j > 0 && d[j][i] == d[j - 1][i] + 1) {
      auto slot = wtn.slots[j - 1];
      slot.push_back(std::nullopt);
      rev.push_back(std::move(slot));
      --j;
    } else {
      WtnSlot slot(prior, std::nullopt);
      slot.push_back(words[i - 1]);
      rev.push_back(std::move(slot));
      --i;
    }
  }
  wtn.slots.assign(rev.rbegin(), rev.rend());
  return wtn;
}

// Seeds the network from `seed`, then aligns the rest in the given order.
inline WordTransitionNetwork build_wtn(const Hypothesis& seed,
                                       const std::vector<Hypothesis>& others) {
  WordTransitionNetwork wtn;
  wtn = align_hypothesis(std::move(wtn), seed);
  for (const auto& h : others) wtn = align_hypothesis(std::move(wtn), h);
  return wtn;
}

// ---------------------------------------------------------------------------
// Voting

inline std::vector<WordToken> vote(const WordTransitionNetwork& wtn,
                                   int min_agreement = kDefaultMinAgreement) {
  const auto primary = wtn.model_index(wtn.primary_model);
  if (!primary) throw Error(ErrorCode::kInvalidArgument, "network has no primary model");
  std::vector<WordToken> out;
  for (const auto& slot : wtn.slots) {
    // normalized word -> supporting model indices
    std::map<std::string, std::vector<std::size_t>> support;
    int eps = 0;
    for (std::size_t k = 0; k < slot.size(); ++k) {
      if (slot[k]) support[slot[k]->normalized].push_back(k);
      else ++eps;
    }
    const auto& prim = slot[*primary];
    const std::vector<std::size_t>* winner = nullptr;
    for (const auto& [word, who] : support) {
      if (static_cast<int>(who.size()) < min_agreement) continue;
      const bool prim_backs = prim && prim->normalized == word;
      if (!winner || who.size() > winner->size() ||
          (who.size() == winner->size() && prim_backs))
        winner = &who;
    }
    if (winner) {
      std::size_t pick = winner->front();
      bool from_primary = false;
      for (std::size_t k : *winner) {
        if (k == *primary) {
          pick = k;
          from_primary = true;
          break;
        }
      }
      if (!from_primary)
        for (std::size_t k : *winner)
          if (wtn.model_ids[k] < wtn.model_ids[pick]) pick = k;
      out.push_back(*slot[pick]);
      continue;
    }
    if (eps >= min_agreement && !prim) continue;
    if (prim) out.push_back(*prim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timestamps

// Words that came from the primary keep their intervals. The others are laid
// out between the neighbouring primary anchors (or the segment bounds) in
// proportion to their character length.
inline std::vector<WordToken> reconcile_timestamps(std::vector<WordToken> voted,
                                                   const std::string& primary_model,
                                                   const TimeInterval& segment,
                                                   Flags* flags = nullptr) {
  auto is_anchor = [&](const WordToken& w) {
    return w.model_id == primary_model && w.interval.has_value();
  };
  const bool any_anchor = std::any_of(voted.begin(), voted.end(), is_anchor);
  if (!any_anchor) {
    if (flags && !voted.empty()) flags->insert(flag::kInterpolatedAll);
    const double step = voted.empty() ? 0.0 : segment.duration() / voted.size();
    for (std::size_t i = 0; i < voted.size(); ++i)
      voted[i].interval = TimeInterval{segment.start_s + step * i, segment.start_s + step * (i + 1)};
    return voted;
  }
  std::size_t i = 0;
  double prev_end = segment.start_s;
  while (i < voted.size()) {
    if (is_anchor(voted[i])) {
      prev_end = std::max(prev_end, voted[i].interval->end_s);
      ++i;
      continue;
    }
    std::size_t k = i;
    while (k < voted.size() && !is_anchor(voted[k])) ++k;
    const double gap_end = k < voted.size() ? voted[k].interval->start_s
                                            : std::max(segment.end_s, prev_end);
    const double g0 = prev_end;
    const double g1 = std::max(gap_end, g0);
    double total = 0.0;
    for (std::size_t q = i; q < k; ++q)
      total += static_cast<double>(std::max<std::size_t>(1, voted[q].normalized.size()));
    double acc = 0.0;
    for (std::size_t q = i; q < k; ++q) {
      const double len = static_cast<double>(std::max<std::size_t>(1, voted[q].normalized.size()));
      const double a = g0 + (g1 - g0) * (acc / total);
      acc += len;
      const double b = q + 1 == k ? g1 : g0 + (g1 - g0) * (acc / total);
      voted[q].interval = TimeInterval{a, b};
    }
    i = k;
  }
  return voted;
}

// ---------------------------------------------------------------------------
// Repetition filter

// Counts every (overlapping) n-gram of normalized tokens; the sample is
// discarded when any n-gram occurs count_threshold times or more. Tokens
// that normalize to nothing (pure punctuation) are dropped first.
inline RepetitionReport repetition_filter(const std::vector<std::string>& tokens,
                                          int n = kDefaultRepetitionN,
                                          int count_threshold = kDefaultRepetitionCount) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
  std::vector<std::string> norm;
  norm.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto w = normalize_word(t);
    if (!w.empty()) norm.push_back(std::move(w));
  }
  RepetitionReport rep;
  rep.n = n;
  const auto un = static_cast<std::size_t>(n);
  if (norm.size() < un) return rep;
  std::unordered_map<std::string, int> counts;
  std::string best_key;
  std::size_t best_pos = 0;
  for (std::size_t i = 0; i + un <= norm.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < un; ++k) {
      key += norm[i + k];
      key.push_back('\x1f');
    }
    const int c = ++counts[key];
    if (c > rep.max_count) {
      rep.max_count = c;
      best_key = key;
      best_pos = i;
    }
  }
  rep.discarded = rep.max_count >= count_threshold;
  if (rep.max_count > 1)
    rep.offending_ngram = std::vector<std::string>(norm.begin() + static_cast<long>(best_pos),
                                                   norm.begin() + static_cast<long>(best_pos + un));
  return rep;
}

// ---------------------------------------------------------------------------
// End-to-end ensemble over backends

struct EnsembleOptions {
  std::vector<std::string> model_ids{"canary", "parakeet", "whisper"};
  std::string primary = "whisper";
  int min_agreement = kDefaultMinAgreement;
  int repetition_n = kDefaultRepetitionN;
  int repetition_count = kDefaultRepetitionCount;
};

struct EnsembleResult {
  std::vector<WordToken> words;  // absolute times
  RepetitionReport report;
  Flags flags;
  std::string primary_used;
};

// Combines hypotheses already collected from the backends. `hyps` may be
// missing failed models; the primary is promoted when absent.
inline EnsembleResult combine_hypotheses(std::vector<Hypothesis> hyps, const EnsembleOptions& opt,
                                         const TimeInterval& segment) {
  EnsembleResult res;
  res.report.n = opt.repetition_n;
  if (hyps.empty()) {
    res.flags.insert(flag::kAsrFailed);
    return res;
  }
  // A hypothesis that loops on its own is dropped before voting, so a
  // hallucinating primary cannot outvote two agreeing recognizers.
  std::optional<RepetitionReport> looped;
  std::erase_if(hyps, [&](const Hypothesis& h) {
    std::vector<std::string> surfaces;
    for (const auto& w : h.words) surfaces.push_back(w.surface);
    auto rep = repetition_filter(surfaces, opt.repetition_n, opt.repetition_count);
    if (!rep.discarded) return false;
    if (!looped) looped = rep;
    res.flags.insert(flag::kHypothesisLooped);
    return true;
  });
  if (hyps.empty()) {
    res.report = *looped;
    res.flags.insert(flag::kRepetitionDiscarded);
    return res;
  }
  if (hyps.size() < opt.model_ids.size()) res.flags.insert(flag::kDegradedEnsemble);
  std::sort(hyps.begin(), hyps.end(),
            [](const Hypothesis& a, const Hypothesis& b) { return a.model_id < b.model_id; });
  auto prim = std::find_if(hyps.begin(), hyps.end(),
                           [&](const Hypothesis& h) { return h.model_id == opt.primary; });
  if (prim == hyps.end()) {
    res.flags.insert(flag::kPrimaryPromoted);
    prim = hyps.begin();
  }
  for (auto& h : hyps) h.is_primary = false;
  prim->is_primary = true;
  res.primary_used = prim->model_id;
  Hypothesis seed = *prim;
  hyps.erase(prim);
  auto wtn = build_wtn(seed, hyps);
  auto voted = vote(wtn, opt.min_agreement);
  voted = reconcile_timestamps(std::move(voted), seed.model_id, segment, &res.flags);
  std::vector<std::string> surfaces;
  for (const auto& w : voted) surfaces.push_back(w.surface);
  res.report = repetition_filter(surfaces, opt.repetition_n, opt.repetition_count);
  if (res.report.discarded) {
    res.flags.insert(flag::kRepetitionDiscarded);
    voted.clear();
  }
  res.words = std::move(voted);
  return res;
}

inline Hypothesis hypothesis_from_result(const AsrResult& r, const std::string& model_id,
                                         double offset_s) {
  Hypothesis h{model_id, false, {}};
  for (const auto& w : r.words) {
    std::optional<TimeInterval> iv;
    if (w.interval) iv = TimeInterval{w.interval->start_s + offset_s, w.interval->end_s + offset_s};
    auto tok = make_token(w.surface, model_id, iv);
    if (tok.normalized.empty()) continue;
    h.words.push_back(std::move(tok));
  }
  return h;
}

// Issues the recognitions concurrently and combines whatever comes back.
inline EnsembleResult ensemble_transcribe(const AudioBuffer& segment_audio,
                                          const TimeInterval& segment, const EnsembleOptions& opt,
                                          TaskContext& ctx,
                                          const nlohmann::json& extra_params = nlohmann::json::object()) {
  std::vector<std::future<TaskResponse>> pending;
  for (const auto& model : opt.model_ids) {
    auto params = extra_params;
    params["model_id"] = model;
    pending.push_back(ctx.submit(ctx.request(TaskKind::kAsr, InlinePcm{segment_audio},
                                             std::move(params), segment.start_s)));
  }
  std::vector<Hypothesis> hyps;
  for (std::size_t k = 0; k < pending.size(); ++k) {
    auto resp = pending[k].get();
    ctx.account("asr", resp);
    if (!resp.ok()) continue;
    hyps.push_back(hypothesis_from_result(resp.get<AsrResult>(), opt.model_ids[k], segment.start_s));
  }
  return combine_hypotheses(std::move(hyps), opt, segment);
}

}  // namespace convcurate
