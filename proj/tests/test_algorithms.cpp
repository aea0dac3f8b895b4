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


#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "convcurate/asr_ensemble.hpp"
#include "convcurate/bgm_policy.hpp"
#include "convcurate/duplex_selector.hpp"
#include "convcurate/fixtures.hpp"
#include "convcurate/metrics/der.hpp"
#include "convcurate/metrics/mixture.hpp"
#include "convcurate/metrics/rtf.hpp"
#include "convcurate/metrics/rttm.hpp"
#include "convcurate/metrics/si_sdr.hpp"
#include "convcurate/metrics/wer.hpp"
#include "convcurate/mock_backends.hpp"
#include "convcurate/overlap_resolver.hpp"

namespace {

using namespace convcurate;

SpeakerSegment seg(const std::string& spk, double a, double b, const std::string& id = {}) {
  return {spk, {a, b}, "c000", id.empty() ? spk + "@" + std::to_string(a) : id};
}

AudioBuffer noise(double dur_s, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  AudioBuffer a{std::vector<double>(static_cast<std::size_t>(dur_s * 16000)), 16000, 1};
  for (auto& v : a.samples) v = u(gen);
  return a;
}

std::vector<std::string> normalized(const std::vector<WordToken>& w) {
  std::vector<std::string> out;
  for (const auto& t : w) out.push_back(t.normalized);
  return out;
}

// ---------------------------------------------------------------------------
// Overlap resolution

TEST(Overlap, CollectReferences) {
  const auto audio = noise(30, 1);
  std::vector<SpeakerSegment> segs{seg("a", 0, 5),        seg("b", 3, 4),        seg("b", 10, 12),
                                   seg("a", 9, 13),       seg("a", 20, 25),      seg("c", 14, 14.8),
                                   seg("c", 15, 15.8),    seg("c", 16, 16.8)};
  auto refs = collect_references(segs, find_overlaps(segs), audio);
  ASSERT_TRUE(refs.count("a"));
  EXPECT_EQ(refs["a"].stretches.back(), (TimeInterval{20, 25}));
  EXPECT_EQ(refs["a"].stretches.front(), (TimeInterval{0, 3}));
  EXPECT_FALSE(refs.count("b"));  // every b segment lies inside an overlap
  ASSERT_TRUE(refs.count("c"));
  EXPECT_NEAR(refs["c"].duration_s, 2.4, 1e-9);
  EXPECT_EQ(refs["c"].stretches.size(), 3u);
  EXPECT_EQ(refs["c"].audio.samples.size(), 3u * 12800u);
}

TEST(Overlap, AssignmentMatchesExhaustiveOracle) {
  EXPECT_TRUE(assign_candidates(std::vector<double>{1, 0}, std::vector<double>{0, 1}, {"x", {1, 0}, 3},
                                {"y", {0, 1}, 3})
                  .cand1_to_ref1);
  const auto orth = assign_candidates(std::vector<double>{0, 1}, std::vector<double>{1, 0}, {"x", {1, 0}, 3},
                                      {"y", {0, 1}, 3});
  EXPECT_FALSE(orth.cand1_to_ref1);
  EXPECT_DOUBLE_EQ(orth.s2, 1.0);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n;
  auto unit = [&] {
    std::vector<double> v(8);
    double s = 0;
    for (auto& x : v) {
      x = n(gen);
      s += x * x;
    }
    for (auto& x : v) x /= std::sqrt(s);
    return v;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  for (int k = 0; k < 500; ++k) {
    const auto c1 = unit(), c2 = unit();
    const ReferenceEmbedding r1{"x", unit(), 3}, r2{"y", unit(), 3};
    const bool joint_keep = dot(c1, r1.vector) + dot(c2, r2.vector) > dot(c1, r2.vector) + dot(c2, r1.vector);
    const bool first_keep = dot(c1, r1.vector) > dot(c1, r2.vector);
    EXPECT_EQ(assign_candidates(c1, c2, r1, r2, AssignMode::kJoint).cand1_to_ref1, joint_keep);
    EXPECT_EQ(assign_candidates(c1, c2, r1, r2, AssignMode::kFirstCandidate).cand1_to_ref1, first_keep);
  }
}

std::vector<TimeInterval> spans(const ResolvedOverlap& r) {
  std::vector<TimeInterval> out;
  for (const auto& t : r.outputs) out.push_back(t.segment.interval);
  return out;
}

TEST(Overlap, CutPolicies) {
  Dispatcher d;
  TaskContext ctx(d, "o");
  const auto audio = noise(10, 2);
  const auto rel = *classify_pair(seg("a", 0, 5), seg("b", 3, 8));
  OverlapPolicy p;
  p.mode = OverlapMode::kCase1Cut;
  EXPECT_EQ(spans(resolve_overlap(rel, audio, 0, p, {}, {}, ctx)), (std::vector<TimeInterval>{{0, 3}, {5, 8}}));
  p.mode = OverlapMode::kCase2AssignFirst;
  EXPECT_EQ(spans(resolve_overlap(rel, audio, 0, p, {}, {}, ctx)), (std::vector<TimeInterval>{{0, 5}, {5, 8}}));
  p.mode = OverlapMode::kCase3AssignSecond;
  EXPECT_EQ(spans(resolve_overlap(rel, audio, 0, p, {}, {}, ctx)), (std::vector<TimeInterval>{{0, 3}, {3, 8}}));
  // Case 1 on containment splits the outer segment and drops the inner one.
  const auto inner = *classify_pair(seg("a", 0, 10), seg("b", 4, 6));
  p.mode = OverlapMode::kCase1Cut;
  const auto r = resolve_overlap(inner, audio, 0, p, {}, {}, ctx);
  EXPECT_EQ(spans(r), (std::vector<TimeInterval>{{0, 4}, {6, 10}}));
  EXPECT_EQ(r.outputs[0].audio.samples.size(), 4u * 16000u);
  // Case 4 without references falls back to cutting.
  p.mode = OverlapMode::kCase4Separate;
  const auto fb = resolve_overlap(rel, audio, 0, p, {}, {}, ctx);
  EXPECT_EQ(spans(fb), (std::vector<TimeInterval>{{0, 3}, {5, 8}}));
  EXPECT_TRUE(fb.flags.count(flag::kNoReference));
}

TEST(Overlap, ThirdSpeaker) {
  const auto rel = *classify_pair(seg("a", 0, 5), seg("b", 3, 8));
  EXPECT_TRUE(third_speaker_present(rel, {seg("a", 0, 5), seg("b", 3, 8), seg("c", 4, 4.5)}));
  EXPECT_FALSE(third_speaker_present(rel, {seg("a", 0, 5), seg("b", 3, 8), seg("c", 5.5, 7)}));
}

struct SeparationFixture : ::testing::Test {
  std::shared_ptr<mock::FixtureStore> store = std::make_shared<mock::FixtureStore>();
  fixtures::Fixture fx = fixtures::make_overlap_fixture("sep", 5.0, 0.5, 12);
  Dispatcher d;
  std::unique_ptr<TaskContext> ctx;
  void SetUp() override {
    store->add("mem://sep", fx);
    d.add(std::make_shared<mock::MockBackend>(store));
    ctx = std::make_unique<TaskContext>(d, "s");
    ctx->set_source("mem://sep", 1.0);
  }
  std::map<std::string, ReferenceEmbedding> refs(const std::vector<SpeakerSegment>& segs) {
    return embed_references(collect_references(segs, find_overlaps(segs), fx.mixture), *ctx);
  }
};

TEST_F(SeparationFixture, Case4OutputsMatchCleanSources) {
  const auto& ov = *fx.overlap;
  std::vector<SpeakerSegment> segs;
  for (const auto& s : fx.segments) segs.push_back(seg(s.speaker_id, s.interval.start_s, s.interval.end_s));
  auto R = refs(segs);
  ASSERT_EQ(R.size(), 2u);
  const auto overlaps = find_overlaps(segs);
  ASSERT_EQ(overlaps.size(), 1u);
  const auto& rel = overlaps[0];
  ASSERT_EQ(rel.overlap, (TimeInterval{ov.t1, ov.t2}));
  const OverlapPolicy p;
  const auto res = resolve_overlap(rel, fx.mixture, 0, p, R.at(rel.seg_a.speaker_id), R.at(rel.seg_b.speaker_id), *ctx);
  ASSERT_EQ(res.outputs.size(), 2u);
  const auto fade = static_cast<std::int64_t>(std::llround(p.crossfade_s * 16000));
  for (const auto& out : res.outputs) {
    EXPECT_TRUE(out.flags.count(flag::kSeparated));
    const auto& src = fx.sources.at(out.segment.speaker_id).samples;
    const auto& mix = fx.mixture.samples;
    const auto s0 = sample_index(out.segment.interval.start_s, 0, 16000);
    const auto o0 = sample_index(ov.t1, 0, 16000), o1 = sample_index(ov.t2, 0, 16000);
    for (std::int64_t n = s0; n < s0 + static_cast<std::int64_t>(out.audio.samples.size()); ++n) {
      const double got = out.audio.samples[static_cast<std::size_t>(n - s0)];
      if (n >= o0 && n < o1) {
        ASSERT_EQ(got, src[static_cast<std::size_t>(n)]) << n;
      } else if (n < o0 - fade || n >= o1 + fade) {
        ASSERT_EQ(got, mix[static_cast<std::size_t>(n)]) << n;
      }
    }
  }
}

TEST_F(SeparationFixture, Case4ContainmentKeepsGeometry) {
  const auto& ov = *fx.overlap;
  const std::vector<SpeakerSegment> segs{seg(ov.speaker1, ov.t_start, ov.t_end), seg(ov.speaker2, ov.t1, ov.t2),
                                         seg(ov.speaker2, ov.t_end + 0.5, ov.t_end + 0.6)};
  const auto rel = find_overlaps(segs).at(0);
  ASSERT_EQ(rel.kind, OverlapKind::kContainment);
  const auto res = resolve_overlap(rel, fx.mixture, 0, OverlapPolicy{}, ReferenceEmbedding{ov.speaker1, mock::speaker_vector(ov.speaker1, 16, mock::MockOptions{}.seed), 3},
                                   ReferenceEmbedding{ov.speaker2, mock::speaker_vector(ov.speaker2, 16, mock::MockOptions{}.seed), 3}, *ctx);
  EXPECT_EQ(spans(res), (std::vector<TimeInterval>{{ov.t_start, ov.t_end}, {ov.t1, ov.t2}}));
}

// ---------------------------------------------------------------------------
// Background music

TEST(Bgm, FlagThreshold) {
  EXPECT_EQ(flag_music({{"a", 0.29}, {"b", 0.30}, {"c", 0.31}}), (std::set<std::string>{"c"}));
  EXPECT_TRUE(flag_music({}).empty());
  EXPECT_EQ(flag_music({{"a", 1.0}, {"b", 1.0}}).size(), 2u);
  EXPECT_THROW(flag_music({{"a", 1.5}}), Error);
}

TEST(Bgm, Windows) {
  const TimeInterval chunk{0, 300};
  auto one = plan_windows({seg("a", 100, 105, "s1")}, chunk);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].interval.duration(), 120.0);
  EXPECT_TRUE(one[0].interval.contains(TimeInterval{100, 105}));
  EXPECT_DOUBLE_EQ(one[0].interval.start_s, 70.0);
  EXPECT_EQ(plan_windows({seg("a", 10, 15, "s1"), seg("a", 215, 220, "s2")}, chunk).size(), 2u);
  auto split = plan_windows({seg("a", 50, 180, "s1")}, chunk);
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split[0].interval.end_s, split[1].interval.start_s);
  EXPECT_TRUE(split[0].split_extraction);
  auto edge = plan_windows({seg("a", 290, 295, "s1")}, chunk);
  EXPECT_EQ(edge[0].interval, (TimeInterval{180, 300}));
}

TEST(Bgm, Splice) {
  const auto original = noise(10, 3);
  const auto vocal = noise(4, 4);
  ExtractionWindow w;
  w.interval = {2, 6};
  EXPECT_EQ(splice_extracted(original, w, vocal).samples, original.samples);
  w.members = {{"all", {2, 6}}};
  const auto full = splice_extracted(original, w, vocal);
  EXPECT_TRUE(std::equal(vocal.samples.begin(), vocal.samples.end(), full.samples.begin() + 32000));
  w.members = {{"x", {2.5, 3}}, {"y", {4, 5}}};
  const auto two = splice_extracted(original, w, vocal);
  for (std::size_t n = 0; n < original.samples.size(); ++n) {
    const double t = n / 16000.0;
    const bool inside = (t >= 2.5 && t < 3) || (t >= 4 && t < 5);
    ASSERT_EQ(two.samples[n], inside ? vocal.samples[n - 32000] : original.samples[n]) << n;
  }
  EXPECT_THROW(splice_extracted(original, w, noise(1, 5)), Error);
}

// ---------------------------------------------------------------------------
// Ensemble

TEST(Ensemble, Normalize) {
  EXPECT_EQ(normalize_word("Yeah,"), "yeah");
  EXPECT_EQ(normalize_word("don't"), "don't");
  EXPECT_EQ(normalize_word(""), "");
  EXPECT_EQ(normalize_word("\"Well...\""), "well");
}

TEST(Ensemble, Alignment) {
  WordTransitionNetwork w;
  w.model_ids = {};
  w.primary_model = "p";
  w = align_hypothesis(w, hypothesis_from_text("p", "the cat sat", true));
  auto same = align_hypothesis(w, hypothesis_from_text("q", "the cat sat"));
  ASSERT_EQ(same.slots.size(), 3u);
  for (const auto& s : same.slots)
    for (const auto& e : s) EXPECT_TRUE(e.has_value());
  auto extra = align_hypothesis(w, hypothesis_from_text("q", "the big cat sat"));
  ASSERT_EQ(extra.slots.size(), 4u);
  int eps_slots = 0;
  for (const auto& s : extra.slots)
    if (!s[0]) {
      ++eps_slots;
      EXPECT_EQ(s[1]->normalized, "big");
    }
  EXPECT_EQ(eps_slots, 1);
  auto empty = align_hypothesis(w, hypothesis_from_text("q", ""));
  ASSERT_EQ(empty.slots.size(), 3u);
  for (const auto& s : empty.slots) EXPECT_FALSE(s[1].has_value());
}

TEST(Ensemble, VoteRule) {
  auto slot = [](const std::string& a, const std::string& b, const std::string& p) {
    WordTransitionNetwork w;
    w.model_ids = {"A", "B", "P"};
    w.primary_model = "P";
    w.slots.push_back({make_token(a, "A"), make_token(b, "B"), make_token(p, "P")});
    return vote(w);
  };
  EXPECT_EQ(slot("cat", "cat", "cap").at(0).normalized, "cat");
  EXPECT_EQ(slot("cat", "dog", "cap").at(0).normalized, "cap");
}

TEST(Ensemble, Timestamps) {
  std::vector<WordToken> prim{make_token("a", "p", TimeInterval{1.0, 1.5}), make_token("b", "p", TimeInterval{2.0, 2.5})};
  EXPECT_EQ(reconcile_timestamps(prim, "p", {0, 3}), prim);
  auto mid = reconcile_timestamps({prim[0], make_token("x", "q"), prim[1]}, "p", {0, 3});
  ASSERT_TRUE(mid[1].interval);
  EXPECT_GT(mid[1].interval->start_s, 1.5 - 1e-12);
  EXPECT_LT(mid[1].interval->end_s, 2.0 + 1e-12);
  auto lead = reconcile_timestamps({make_token("x", "q"), prim[0], prim[1]}, "p", {0, 3});
  EXPECT_DOUBLE_EQ(lead[0].interval->end_s, 1.0);
}

TEST(Ensemble, RepetitionMatchesNgramTable) {
  EXPECT_EQ(repetition_filter({"a", "b"}, 15, 5).max_count, 0);
  EXPECT_FALSE(repetition_filter({"a", "b"}, 15, 5).discarded);
  std::mt19937_64 gen(14);
  std::uniform_int_distribution<int> tok(0, 3), len(0, 120), rep(0, 10);
  for (int k = 0; k < 300; ++k) {
    std::vector<std::string> v(len(gen));
    for (auto& x : v) x = "t" + std::to_string(tok(gen));
    const int n = 1 + rep(gen) % 6;
    std::map<std::vector<std::string>, int> table;
    for (std::size_t i = 0; i + n <= v.size(); ++i) ++table[{v.begin() + i, v.begin() + i + n}];
    int best = 0;
    for (const auto& [g, c] : table) best = std::max(best, c);
    const auto r = repetition_filter(v, n, 5);
    EXPECT_EQ(r.max_count, best);
    EXPECT_EQ(r.discarded, best >= 5);
  }
}

TEST(Ensemble, CombineFlags) {
  EnsembleOptions o;
  const TimeInterval segv{0, 5};
  auto H = [](const std::string& m, const std::string& t) { return hypothesis_from_text(m, t); };
  auto same = combine_hypotheses({H("canary", "hello there"), H("parakeet", "hello there"), H("whisper", "hello there")}, o, segv);
  EXPECT_EQ(normalized(same.words), (std::vector<std::string>{"hello", "there"}));
  EXPECT_TRUE(same.flags.empty() || same.flags == Flags{flag::kInterpolatedAll});

  std::string loop;
  for (int i = 0; i < 100; ++i) loop += "Yeah. ";
  auto hall = combine_hypotheses({H("canary", "i went home"), H("parakeet", "i went home"), H("whisper", loop)}, o, segv);
  EXPECT_EQ(normalized(hall.words), (std::vector<std::string>{"i", "went", "home"}));
  EXPECT_TRUE(hall.flags.count(flag::kHypothesisLooped));
  EXPECT_TRUE(hall.flags.count(flag::kPrimaryPromoted));

  auto two = combine_hypotheses({H("canary", "a b"), H("whisper", "a b")}, o, segv);
  EXPECT_TRUE(two.flags.count(flag::kDegradedEnsemble));
  EXPECT_FALSE(two.flags.count(flag::kPrimaryPromoted));
  EXPECT_TRUE(combine_hypotheses({}, o, segv).flags.count(flag::kAsrFailed));
}

// ---------------------------------------------------------------------------
// Duplex

std::vector<Turn> alternating(const std::vector<double>& durs) {
  std::vector<Turn> t;
  double at = 0;
  for (std::size_t i = 0; i < durs.size(); ++i) {
    t.push_back({i % 2 ? "b" : "a", {at, at + durs[i]}, {}});
    at += durs[i] + 0.5;
  }
  return t;
}

TEST(Duplex, Examples) {
  auto r = select_regions(alternating({4, 6, 3}));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].turns.size(), 3u);
  r = select_regions(alternating({4, 12, 3, 5, 2}));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].first_turn_index, 2u);
  EXPECT_EQ(r[0].turns.size(), 3u);
  EXPECT_TRUE(select_regions(alternating({11, 11, 11})).empty());
  EXPECT_TRUE(select_regions(std::vector<Turn>{{"a", {0, 1}, {}}, {"a", {2, 3}, {}}, {"a", {4, 5}, {}}}).empty());
}

TEST(Duplex, StereoMixdownAndSwap) {
  AudioBuffer audio{std::vector<double>(16000 * 20, 0.0), 16000, 1};
  const auto n = noise(20, 6);
  std::vector<SegmentTrack> tracks;
  const std::vector<SpeakerSegment> segs{seg("a", 1, 3, "s0"), seg("b", 3.5, 6, "s1"), seg("a", 7, 9, "s2"), seg("b", 9.5, 12, "s3")};
  for (const auto& s : segs)
    for (auto k = sample_index(s.interval.start_s, 0, 16000); k < sample_index(s.interval.end_s, 0, 16000); ++k)
      audio.samples[static_cast<std::size_t>(k)] = n.samples[static_cast<std::size_t>(k)];
  for (const auto& s : segs) tracks.push_back(make_track(s, audio, 0));
  auto regions = select_regions(turns_from_tracks(tracks));
  ASSERT_EQ(regions.size(), 1u);
  const auto st = build_stereo(regions[0], tracks, {}, 0, 16000);
  ASSERT_TRUE(st.sample);
  const auto expect = slice(audio, regions[0].interval);
  ASSERT_EQ(st.sample->left.samples.size(), expect.samples.size());
  for (std::size_t i = 0; i < expect.samples.size(); ++i)
    ASSERT_EQ(st.sample->left.samples[i] + st.sample->right.samples[i], expect.samples[i]);
  auto swapped = regions[0];
  swapped.left_speaker_id = swapped.left_speaker_id == "a" ? "b" : "a";
  const auto sw = build_stereo(swapped, tracks, {}, 0, 16000);
  EXPECT_EQ(sw.sample->left.samples, st.sample->right.samples);
  EXPECT_EQ(sw.sample->right.samples, st.sample->left.samples);
  swapped.left_speaker_id = "zed";
  EXPECT_TRUE(build_stereo(swapped, tracks, {}, 0, 16000).flags.count(flag::kRegionDropped));
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, Wer) {
  const std::vector<std::string> abc{"a", "b", "c"};
  EXPECT_EQ(metrics::wer(abc, abc).wer, 0.0);
  const auto w = metrics::wer(abc, {"a", "x", "c", "d"});
  EXPECT_EQ(w.substitutions, 1);
  EXPECT_EQ(w.insertions, 1);
  EXPECT_DOUBLE_EQ(w.wer, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(metrics::wer({"a", "b", "c", "d", "e"}, {}).wer, 1.0);
}

std::vector<metrics::RttmSegment> R(std::initializer_list<std::tuple<const char*, double, double>> v) {
  std::vector<metrics::RttmSegment> out;
  for (const auto& [s, a, b] : v) out.push_back({"rec", s, {a, b}});
  return out;
}

TEST(Metrics, DerFamily) {
  const auto ref = R({{"a", 0, 4}, {"b", 4.5, 8}, {"a", 8.2, 8.6}, {"b", 9, 9.4}});
  EXPECT_DOUBLE_EQ(metrics::der(ref, ref).der, 0.0);
  EXPECT_DOUBLE_EQ(metrics::der(ref, {}).der, 1.0);
  EXPECT_THROW(metrics::der({}, ref), Error);

  EXPECT_DOUBLE_EQ(metrics::jer(ref, ref), 0.0);
  EXPECT_DOUBLE_EQ(metrics::jer(R({{"a", 0, 2}, {"b", 2, 4}}), R({{"x", 0, 2}})), 0.5);
  EXPECT_DOUBLE_EQ(metrics::jer(R({{"a", 0, 2}}), R({{"x", 5, 6}})), 1.0);

  EXPECT_FALSE(metrics::der_short(R({{"a", 0, 4}, {"b", 5, 9}}), ref, 1.0).breakdown);
  auto hyp = R({{"h1", 8.2, 8.6}, {"h2", 9, 9.4}, {"h2", 0, 3}, {"h1", 3, 8}});
  EXPECT_DOUBLE_EQ(metrics::der_short(ref, hyp, 1.0, 0.0).breakdown->der, 0.0);
  EXPECT_DOUBLE_EQ(metrics::der_short(ref, {}, 1.0, 0.0).breakdown->der, 1.0);

  EXPECT_FALSE(metrics::der_turn(R({{"a", 0, 4}, {"a", 5, 9}}), ref).breakdown);
  EXPECT_DOUBLE_EQ(metrics::der_turn(ref, ref).breakdown->der, 0.0);
}

TEST(Metrics, Rttm) {
  std::istringstream in(";; comment\nSPEAKER rec 1 0.500 1.250 <NA> <NA> spk1 <NA> <NA>\n\nSPEAKER rec 1 3.000 0.500 <NA> <NA> spk2 <NA> <NA>\n");
  const auto v = metrics::parse_rttm(in);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].speaker_id, "spk1");
  EXPECT_DOUBLE_EQ(v[0].interval.end_s, 1.75);
  std::ostringstream out;
  metrics::write_rttm(out, v);
  std::istringstream back(out.str());
  const auto w = metrics::parse_rttm(back);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].interval, v[1].interval);
  std::istringstream bad("SPEAKER rec 1 x 1 <NA> <NA> s\n");
  EXPECT_THROW(metrics::parse_rttm(bad), Error);
  std::istringstream shortline("SPEAKER rec 1 0 1\n");
  EXPECT_THROW(metrics::parse_rttm(shortline), Error);
}

TEST(Metrics, SiSdr) {
  const auto x = noise(1, 7);
  EXPECT_TRUE(std::isinf(metrics::si_sdr(x, x)));
  AudioBuffer y = x;
  for (auto& v : y.samples) v *= 0.3;
  EXPECT_TRUE(std::isinf(metrics::si_sdr(y, x)));
  EXPECT_THROW(metrics::si_sdr(noise(0.5, 1), x), Error);
}

TEST(Metrics, Mixture) {
  const auto a = noise(10, 8), b = noise(10, 9);
  const auto full = metrics::synth_overlap_mixture(a, b, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(full.t1, full.t_start);
  EXPECT_DOUBLE_EQ(full.t2, full.t_end);
  const auto part = metrics::synth_overlap_mixture(a, b, 0.0, 0.2);
  EXPECT_NEAR(part.t2 - part.t1, 2.0, 1e-9);
  for (double sir : {0.0, 5.0, 10.0}) {
    const auto m = metrics::synth_overlap_mixture(a, b, sir, 0.5);
    const auto lo = static_cast<std::size_t>(m.t1 * 16000), hi = static_cast<std::size_t>(m.t2 * 16000);
    double p1 = 0, p2 = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      p1 += m.source1.samples[i] * m.source1.samples[i];
      p2 += m.source2.samples[i] * m.source2.samples[i];
    }
    EXPECT_NEAR(10 * std::log10(p1 / p2), sir, 0.1);
    for (std::size_t i = 0; i < m.mixture.samples.size(); ++i)
      ASSERT_EQ(m.mixture.samples[i], m.source1.samples[i] + m.source2.samples[i]);
  }
  EXPECT_THROW(metrics::synth_overlap_mixture(a, b, 0.0, 0.0), Error);
}

TEST(Metrics, Rtf) {
  EXPECT_EQ(metrics::rtf_report({{"x", 0.0}}, 10).total_rtf, 0.0);
  EXPECT_NEAR(metrics::rtf_report({{"a", 1}, {"b", 1}, {"c", 1}}, 30).total_rtf, 0.1, 1e-12);
  const auto r = metrics::rtf_report({{"Pipeline", 20.95}}, 120);
  EXPECT_NE(r.render().find("0.1746"), std::string::npos);
  EXPECT_THROW(metrics::rtf_report({{"x", 1}}, 0), Error);
}

}  // namespace
