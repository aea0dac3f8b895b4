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

// Command-line front end. Exit codes: 0 success, 1 partial failure,
// 2 configuration error.

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "convcurate/conformance.hpp"
#include "convcurate/fixtures.hpp"
#include "convcurate/manifest.hpp"
#include "convcurate/metrics/der.hpp"
#include "convcurate/metrics/rttm.hpp"
#include "convcurate/metrics/wer.hpp"
#include "convcurate/mock_backends.hpp"
#include "convcurate/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace convcurate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

int cmd_run(const std::optional<fs::path>& config, const std::vector<std::string>& sets,
            const std::vector<std::string>& inputs, const std::string& output, int workers) {
  auto overrides = sets;
  if (!output.empty()) overrides.push_back("output_dir=" + json(fs::absolute(output).string()).dump());
  if (workers > 0) overrides.push_back("worker_count=" + std::to_string(workers));
  auto cfg = load_config(config, overrides);
  for (const auto& i : inputs) cfg.inputs.push_back(fs::absolute(i));
  if (cfg.backends.empty()) throw Error(ErrorCode::kConfig, "no backends configured");
  auto dispatcher = make_dispatcher(cfg);
  const auto sum = run_pipeline(cfg, *dispatcher);
  for (const auto& f : sum.files) {
    if (!f.ok) std::fprintf(stderr, "failed: %s: %s\n", f.input.string().c_str(), f.error.c_str());
    else if (f.skipped) std::fprintf(stderr, "skipped (complete): %s\n", f.input.string().c_str());
  }
  std::printf("files: %zu  failed: %zu  skipped: %zu\n", sum.files.size(), sum.failed, sum.skipped);
  if (sum.rtf) std::printf("%s", sum.rtf->render().c_str());
  return sum.exit_code();
}

// Per-recording DER family plus a pooled row.
int cmd_evaluate(const fs::path& ref_path, const fs::path& hyp_path, double collar,
                 std::vector<double> short_durs, double turn_window, double turn_gap,
                 const std::string& json_out, const std::string& ref_text, const std::string& hyp_text) {
  const auto ref = metrics::read_rttm(ref_path);
  const auto hyp = metrics::read_rttm(hyp_path);
  std::map<std::string, std::pair<std::vector<metrics::RttmSegment>, std::vector<metrics::RttmSegment>>> recs;
  for (const auto& s : ref) recs[s.recording_id].first.push_back(s);
  for (const auto& s : hyp)
    if (recs.count(s.recording_id)) recs[s.recording_id].second.push_back(s);

  json out;
  out["collar_s"] = collar;
  json rows = json::array();
  double miss = 0, fa = 0, conf = 0, total = 0;
  std::printf("%-24s %8s %8s %8s %8s %8s", "recording", "DER%", "miss%", "fa%", "conf%", "JER%");
  for (double d : short_durs) std::printf(" %9s", ("DER<=" + std::to_string(d).substr(0, 3)).c_str());
  std::printf(" %9s\n", "DERturn");
  auto fmt_opt = [](const metrics::RestrictedDer& r) -> json {
    return r.breakdown ? json(100.0 * r.breakdown->der) : json(nullptr);
  };
  for (const auto& [id, pair] : recs) {
    const auto& [r, h] = pair;
    const auto b = metrics::der(r, h, collar);
    const double j = metrics::jer(r, h);
    json row{{"recording_id", id},
             {"der_pct", 100.0 * b.der},
             {"missed_s", b.missed_s},
             {"false_alarm_s", b.false_alarm_s},
             {"confusion_s", b.confusion_s},
             {"ref_speech_s", b.total_ref_speech_s},
             {"jer_pct", 100.0 * j}};
    std::printf("%-24s %8.2f %8.2f %8.2f %8.2f %8.2f", id.c_str(), 100 * b.der,
                100 * b.missed_s / b.total_ref_speech_s, 100 * b.false_alarm_s / b.total_ref_speech_s,
                100 * b.confusion_s / b.total_ref_speech_s, 100 * j);
    json shorts = json::object();
    for (double d : short_durs) {
      const auto s = metrics::der_short(r, h, d, collar);
      shorts[std::to_string(d).substr(0, 3)] = fmt_opt(s);
      if (s.breakdown) std::printf(" %9.2f", 100 * s.breakdown->der);
      else std::printf(" %9s", "n/a");
    }
    row["der_short_pct"] = shorts;
    const auto t = metrics::der_turn(r, h, turn_window, turn_gap, collar);
    row["der_turn_pct"] = fmt_opt(t);
    if (t.breakdown) std::printf(" %9.2f\n", 100 * t.breakdown->der);
    else std::printf(" %9s\n", "n/a");
    rows.push_back(std::move(row));
    miss += b.missed_s;
    fa += b.false_alarm_s;
    conf += b.confusion_s;
    total += b.total_ref_speech_s;
  }
  out["recordings"] = rows;
  if (total > 0) {
    const double pooled = (miss + fa + conf) / total;
    out["pooled_der_pct"] = 100.0 * pooled;
    std::printf("%-24s %8.2f\n", "pooled", 100 * pooled);
  }
  if (!ref_text.empty() && !hyp_text.empty()) {
    auto words = [](const std::string& path) {
      std::ifstream in(path);
      if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
      std::vector<std::string> w;
      for (std::string s; in >> s;) {
        auto n = normalize_word(s);
        if (!n.empty()) w.push_back(n);
      }
      return w;
    };
    const auto w = metrics::wer(words(ref_text), words(hyp_text));
    out["wer"] = {{"wer_pct", 100.0 * w.wer}, {"substitutions", w.substitutions},
                  {"deletions", w.deletions}, {"insertions", w.insertions}, {"ref_words", w.ref_words}};
    std::printf("WER %.2f%%  (S=%d D=%d I=%d N=%d)\n", 100 * w.wer, w.substitutions, w.deletions,
                w.insertions, w.ref_words);
  }
  if (!json_out.empty()) {
    if (json_out == "-") std::cout << out.dump(2) << "\n";
    else write_atomic(json_out, out.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_synth(const fs::path& out) {
  fs::create_directories(out);
  std::size_t n = 0;
  for (const auto& fx : fixtures::standard_corpus()) {
    fixtures::write_fixture(fx, out);
    ++n;
  }
  std::printf("wrote %zu fixtures to %s\n", n, out.string().c_str());
  return kExitOk;
}

// Accepts manifest files, per-file output directories or a run directory.
int cmd_validate(const std::vector<std::string>& paths) {
  std::vector<fs::path> manifests;
  for (const auto& p : paths) {
    if (fs::is_regular_file(p)) {
      manifests.push_back(p);
    } else if (fs::is_directory(p)) {
      if (fs::exists(fs::path(p) / kManifestFile)) {
        manifests.push_back(fs::path(p) / kManifestFile);
        continue;
      }
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory() && fs::exists(e.path() / kManifestFile)) found.push_back(e.path() / kManifestFile);
      std::sort(found.begin(), found.end());
      manifests.insert(manifests.end(), found.begin(), found.end());
    } else {
      throw Error(ErrorCode::kConfig, "no such path: " + p);
    }
  }
  bool all_ok = true;
  for (const auto& m : manifests) {
    std::ifstream in(m);
    const json j = json::parse(in, nullptr, false);
    std::vector<std::string> errs;
    if (j.is_discarded()) errs.push_back("not valid JSON");
    else errs = validate_manifest(j, m.parent_path());
    if (errs.empty()) {
      std::printf("OK   %s\n", m.string().c_str());
    } else {
      all_ok = false;
      std::printf("BAD  %s\n", m.string().c_str());
      for (const auto& e : errs) std::printf("     %s\n", e.c_str());
    }
  }
  return all_ok ? kExitOk : kExitPartial;
}

int cmd_conformance(bool use_mock, const std::string& exec, const std::string& tcp, const std::string& scratch,
                    bool as_json) {
  const int chosen = int(use_mock) + int(!exec.empty()) + int(!tcp.empty());
  if (chosen != 1) throw Error(ErrorCode::kConfig, "choose exactly one of --mock, --exec, --tcp");
  std::unique_ptr<FrameChannel> ch;
  if (use_mock) {
    ch = FrameChannel::in_process(std::make_shared<mock::MockBackend>(std::make_shared<mock::FixtureStore>()));
  } else if (!exec.empty()) {
    ch = FrameChannel::exec(exec);
  } else {
    const auto colon = tcp.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kConfig, "--tcp expects host:port");
    ch = FrameChannel::tcp(tcp.substr(0, colon), std::stoi(tcp.substr(colon + 1)));
  }
  fs::path dir = scratch.empty() ? fs::temp_directory_path() / ("convcurate_conf_" + std::to_string(::getpid())) : fs::path(scratch);
  const auto rep = run_conformance(*ch, dir);
  if (as_json) std::cout << rep.to_json().dump(2) << "\n";
  else std::cout << rep.render();
  if (scratch.empty()) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return rep.passed() ? kExitOk : kExitPartial;
}

// Serves the mock backends over stdio, or over TCP when a port is given.
int cmd_mock_worker(int port, double asr_noise, std::uint64_t seed, const std::vector<std::string>& kinds) {
  mock::MockOptions opt;
  opt.asr_noise = asr_noise;
  opt.seed = seed;
  if (!kinds.empty()) {
    opt.kinds.clear();
    for (const auto& k : kinds) {
      auto kind = task_kind_from_string(k);
      if (!kind) throw Error(ErrorCode::kConfig, "unknown task kind " + k);
      opt.kinds.insert(*kind);
    }
  }
  auto impl = std::make_shared<mock::MockBackend>(std::make_shared<mock::FixtureStore>(), opt);
  if (port <= 0) {
    serve_stream(*impl, STDIN_FILENO, STDOUT_FILENO);
    return kExitOk;
  }
  ::signal(SIGPIPE, SIG_IGN);
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  int one = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 16) != 0)
    throw Error(ErrorCode::kConfig, "cannot listen on port " + std::to_string(port));
  std::fprintf(stderr, "mock worker listening on 127.0.0.1:%d\n", port);
  for (;;) {
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) continue;
    std::thread([impl, fd] {
      serve_stream(*impl, fd, fd);
      ::close(fd);
    }).detach();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convcurate: conversational speech corpus curation"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Process input audio into manifests");
  std::string config;
  std::vector<std::string> sets, inputs;
  std::string output;
  int workers = 0;
  run->add_option("-c,--config", config, "JSON config file");
  run->add_option("--set", sets, "Override a config key, e.g. --set asr.primary=whisper");
  run->add_option("-o,--output", output, "Output directory");
  run->add_option("-j,--workers", workers, "File-level workers");
  run->add_option("inputs", inputs, "Input files or directories");

  auto* eval = app.add_subcommand("evaluate", "Score hypothesis RTTM against reference RTTM");
  std::string ref, hyp, json_out, ref_text, hyp_text;
  double collar = metrics::kDefaultCollarS, turn_window = metrics::kDefaultTurnWindowS,
         turn_gap = metrics::kDefaultTurnGapS;
  std::vector<double> short_durs{0.5, 1.0};
  eval->add_option("--ref", ref, "Reference RTTM")->required();
  eval->add_option("--hyp", hyp, "Hypothesis RTTM")->required();
  eval->add_option("--collar", collar, "Collar in seconds")->capture_default_str();
  eval->add_option("--short", short_durs, "Max durations for short-segment DER")->capture_default_str();
  eval->add_option("--turn-window", turn_window, "Half window around change points")->capture_default_str();
  eval->add_option("--turn-gap", turn_gap, "Max gap between turns")->capture_default_str();
  eval->add_option("--json", json_out, "Write JSON results here ('-' for stdout)");
  eval->add_option("--ref-text", ref_text, "Reference transcript for WER");
  eval->add_option("--hyp-text", hyp_text, "Hypothesis transcript for WER");

  auto* synth = app.add_subcommand("synth-fixtures", "Write the synthetic fixture corpus");
  std::string synth_out = "fixtures";
  synth->add_option("-o,--output", synth_out, "Output directory")->capture_default_str();

  auto* validate = app.add_subcommand("validate-manifest", "Check manifests against the schema");
  std::vector<std::string> vpaths;
  validate->add_option("paths", vpaths, "Manifest files or output directories")->required();

  auto* conf = app.add_subcommand("backend-conformance", "Run the wire conformance suite");
  bool conf_mock = false, conf_json = false;
  std::string conf_exec, conf_tcp, conf_scratch;
  conf->add_flag("--mock", conf_mock, "Test the built-in mock backend");
  conf->add_option("--exec", conf_exec, "Spawn this worker command and test it over stdio");
  conf->add_option("--tcp", conf_tcp, "Connect to host:port");
  conf->add_option("--scratch", conf_scratch, "Directory for the probe fixture");
  conf->add_flag("--json", conf_json, "JSON report");

  auto* worker = app.add_subcommand("mock-worker", "Serve the mock backends over stdio or TCP");
  int port = 0;
  double noise = 0.0;
  std::uint64_t seed = mock::MockOptions{}.seed;
  std::vector<std::string> kinds;
  worker->add_option("--port", port, "Listen on 127.0.0.1:PORT instead of stdio");
  worker->add_option("--asr-noise", noise, "Word substitution probability");
  worker->add_option("--seed", seed, "Mock seed");
  worker->add_option("--kinds", kinds, "Task kinds to serve (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config.empty() ? std::nullopt : std::optional<fs::path>(config), sets, inputs, output, workers);
    if (*eval)
      return cmd_evaluate(ref, hyp, collar, short_durs, turn_window, turn_gap, json_out, ref_text, hyp_text);
    if (*synth) return cmd_synth(synth_out);
    if (*validate) return cmd_validate(vpaths);
    if (*conf) return cmd_conformance(conf_mock, conf_exec, conf_tcp, conf_scratch, conf_json);
    if (*worker) return cmd_mock_worker(port, noise, seed, kinds);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kSchema ? kExitConfig : kExitPartial;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPartial;
  }
  return kExitOk;
}
