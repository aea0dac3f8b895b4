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

// Wire-level conformance checks for model backends. Works on raw frames so
// that encoding differences are visible, not hidden by a decode step.

#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "convcurate/dispatcher.hpp"
#include "convcurate/fixtures.hpp"
#include "convcurate/mock_backends.hpp"
#include "convcurate/protocol.hpp"

namespace convcurate {

// One newline-framed duplex byte stream to a worker.
class FrameChannel {
 public:
  FrameChannel(const FrameChannel&) = delete;
  FrameChannel& operator=(const FrameChannel&) = delete;

  ~FrameChannel() {
    if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
    if (rfd_ >= 0) {
      ::shutdown(rfd_, SHUT_RDWR);
      ::close(rfd_);
    }
    if (server_.joinable()) server_.join();
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  // In-process mock served over a socket pair.
  static std::unique_ptr<FrameChannel> in_process(std::shared_ptr<Backend> impl) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) throw Error(ErrorCode::kBackend, "socketpair() failed");
    auto ch = std::unique_ptr<FrameChannel>(new FrameChannel(sv[0], sv[0]));
    ch->server_ = std::thread([impl, fd = sv[1]] {
      serve_stream(*impl, fd, fd);
      ::close(fd);
    });
    return ch;
  }

  static std::unique_ptr<FrameChannel> exec(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw Error(ErrorCode::kBackend, "pipe() failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorCode::kBackend, "fork() failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    auto ch = std::unique_ptr<FrameChannel>(new FrameChannel(from_child[0], to_child[1]));
    ch->pid_ = pid;
    return ch;
  }

  static std::unique_ptr<FrameChannel> tcp(const std::string& host, int port) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port_s = std::to_string(port);
    if (::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res) != 0)
      throw Error(ErrorCode::kBackend, "cannot resolve " + host);
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw Error(ErrorCode::kBackend, "cannot connect to " + host + ":" + port_s);
    return std::unique_ptr<FrameChannel>(new FrameChannel(fd, fd));
  }

  bool send_raw(std::string_view bytes) { return write_all(wfd_, bytes); }

  // Next frame including its newline, or nullopt on EOF or timeout.
  std::optional<std::string> read_frame(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl + 1);
        buf_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{rfd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) return std::nullopt;
      char tmp[65536];
      const ssize_t n = ::read(rfd_, tmp, sizeof tmp);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 private:
  FrameChannel(int rfd, int wfd) : rfd_(rfd), wfd_(wfd) {}

  int rfd_;
  int wfd_;
  pid_t pid_ = -1;
  std::thread server_;
  std::string buf_;
};

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  std::vector<std::string> advertised;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) arr.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return {{"passed", passed()}, {"advertised", advertised}, {"checks", arr}};
  }

  std::string render() const {
    std::string s;
    for (const auto& c : checks)
      s += std::string(c.passed ? "PASS " : "FAIL ") + c.name + (c.detail.empty() ? "" : "  (" + c.detail + ")") + "\n";
    s += passed() ? "conformance: PASS\n" : "conformance: FAIL\n";
    return s;
  }
};

struct ConformanceOptions {
  std::chrono::milliseconds timeout{10000};
  std::size_t pipelined = 20;
};

namespace conformance_detail {

inline std::string trim_newline(std::string s) {
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

// Synthetic two-speaker source the checks point requests at.
struct Probe {
  std::filesystem::path dir;
  std::filesystem::path wav;
  double duration_s = 0.0;
};

inline Probe write_probe(const std::filesystem::path& dir) {
  auto fx = fixtures::make_overlap_fixture("conformance_probe", 5.0, 0.5, 99);
  Probe p;
  p.dir = dir;
  p.wav = std::filesystem::absolute(fixtures::write_fixture(fx, dir));
  p.duration_s = fx.mixture.duration_s();
  return p;
}

inline TaskRequest probe_request(const Probe& p, TaskKind kind, const std::string& id, const TimeInterval& iv) {
  TaskRequest r;
  r.request_id = id;
  r.kind = kind;
  r.payload = FileRef{p.wav.string(), iv};
  r.params = {{"source", p.wav.string()}, {"source_start_s", iv.start_s}, {"source_gain", 1.0}};
  if (kind == TaskKind::kCaption) r.params["context"] = nlohmann::json::array();
  return r;
}

}  // namespace conformance_detail

// Runs the check battery over an open channel. `scratch` receives the probe
// fixture and must be readable by the worker.
inline ConformanceReport run_conformance(FrameChannel& ch, const std::filesystem::path& scratch,
                                         const ConformanceOptions& opt = {}) {
  using conformance_detail::trim_newline;
  ConformanceReport rep;
  auto add = [&](std::string name, bool ok, std::string detail = {}) {
    rep.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  const auto hello_frame = ch.read_frame(opt.timeout);
  if (!hello_frame) {
    add("hello", false, "no hello frame before timeout");
    return rep;
  }
  Hello hello;
  try {
    hello = decode_as<Hello>(*hello_frame);
    const bool canonical = encode(hello) == *hello_frame;
    add("hello", canonical, canonical ? "" : "re-encoding differs from the received frame");
  } catch (const std::exception& e) {
    add("hello", false, e.what());
    return rep;
  }
  for (const auto& c : hello.capabilities) rep.advertised.push_back(to_string(c.kind));

  const auto probe = conformance_detail::write_probe(scratch);
  const TimeInterval short_iv{0.0, std::min(2.0, probe.duration_s)};
  const TimeInterval full_iv{0.0, probe.duration_s};
  std::size_t seq = 0;
  auto next_id = [&] { return "conf-" + std::to_string(seq++); };

  // Sends one frame and decodes the reply; fills `why` on failure.
  auto roundtrip = [&](const std::string& frame, std::string& why) -> std::optional<TaskResponse> {
    if (!ch.send_raw(frame)) {
      why = "write failed";
      return std::nullopt;
    }
    const auto reply = ch.read_frame(opt.timeout);
    if (!reply) {
      why = "no response before timeout";
      return std::nullopt;
    }
    try {
      auto resp = decode_as<TaskResponse>(*reply);
      if (encode(resp) != *reply) {
        why = "response is not canonical: " + trim_newline(*reply).substr(0, 120);
        return std::nullopt;
      }
      return resp;
    } catch (const std::exception& e) {
      why = e.what();
      return std::nullopt;
    }
  };

  for (const auto& cap : hello.capabilities) {
    std::vector<std::string> models = cap.models;
    if (models.empty()) models.push_back("");
    for (const auto& model : models) {
      const auto iv = cap.kind == TaskKind::kSeparate2 || cap.kind == TaskKind::kDiarize ? full_iv : short_iv;
      auto req = conformance_detail::probe_request(probe, cap.kind, next_id(), iv);
      if (!model.empty()) req.params["model_id"] = model;
      std::string name = std::string("task ") + to_string(cap.kind) + (model.empty() ? "" : "/" + model);
      std::string why;
      const auto resp = roundtrip(encode(req), why);
      if (!resp) {
        add(name, false, why);
        continue;
      }
      if (resp->request_id != req.request_id || resp->kind != req.kind)
        add(name, false, "request_id or task does not echo the request");
      else if (!resp->ok())
        add(name, false, "error " + resp->error().code + ": " + resp->error().message);
      else if (resp->timing_s < 0.0)
        add(name, false, "negative timing_s");
      else
        add(name, true);
    }
  }

  if (!hello.capabilities.empty()) {
    const auto kind = hello.capabilities.front().kind;
    const auto& models = hello.capabilities.front().models;
    std::vector<std::string> ids;
    std::string batch;
    for (std::size_t i = 0; i < opt.pipelined; ++i) {
      auto req = conformance_detail::probe_request(probe, kind, next_id(), {0.0, 0.5});
      if (!models.empty()) req.params["model_id"] = models.front();
      ids.push_back(req.request_id);
      batch += encode(req);
    }
    std::string why;
    if (!ch.send_raw(batch)) why = "write failed";
    for (std::size_t i = 0; why.empty() && i < ids.size(); ++i) {
      const auto reply = ch.read_frame(opt.timeout);
      if (!reply) {
        why = "response " + std::to_string(i) + " missing";
        break;
      }
      try {
        const auto resp = decode_as<TaskResponse>(*reply);
        if (resp.request_id != ids[i]) why = "response " + std::to_string(i) + " has id " + resp.request_id;
      } catch (const std::exception& e) {
        why = e.what();
      }
    }
    add("pipelined " + std::to_string(opt.pipelined) + " requests", why.empty(), why);
  }

  {
    auto frame = encode(conformance_detail::probe_request(probe, TaskKind::kVad, next_id(), short_iv));
    frame = frame.substr(0, frame.size() / 2) + "\n";
    std::string why;
    const auto resp = roundtrip(frame, why);
    const bool ok = resp && !resp->ok() && resp->error().code == "protocol";
    add("truncated frame yields protocol error", ok, resp && why.empty() && !ok ? "got a different reply" : why);
  }
  {
    auto j = to_json(conformance_detail::probe_request(probe, TaskKind::kVad, next_id(), short_iv));
    j["v"] = kProtocolVersion + 1;
    std::string why;
    const auto resp = roundtrip(j.dump() + "\n", why);
    const bool ok = resp && !resp->ok() && resp->error().code == "protocol";
    add("unknown version yields protocol error", ok, resp && why.empty() && !ok ? "got a different reply" : why);
  }
  if (hello.find(TaskKind::kAsr)) {
    auto req = conformance_detail::probe_request(probe, TaskKind::kAsr, next_id(), short_iv);
    req.params["model_id"] = "no-such-model";
    std::string why;
    const auto resp = roundtrip(encode(req), why);
    const bool ok = resp && !resp->ok() && resp->error().code == "capability";
    add("unknown asr model yields capability error", ok, resp && why.empty() && !ok ? "got a different reply" : why);
  }
  return rep;
}

}  // namespace convcurate
