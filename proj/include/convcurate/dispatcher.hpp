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

// Backend connections and the dispatcher that multiplexes task requests
// over a pool of them.
//
// A Backend is one connection: it answers one request at a time. The
// Dispatcher owns a worker thread per connection, routes each request to a
// connection advertising the task kind (and model id, for asr), enforces a
// deadline, retries once on timeout or connection loss and matches
// responses to requests by id.

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "convcurate/error.hpp"
#include "convcurate/protocol.hpp"

namespace convcurate {

class Backend {
 public:
  virtual ~Backend() = default;
  // Capability handshake; called once before any request.
  virtual Hello hello() = 0;
  // Blocking. Throws Error(kBackend) when the connection is lost and
  // ProtocolError on malformed frames.
  virtual TaskResponse call(const TaskRequest& request) = 0;
};

// Runs every request through encode/decode in both directions, so an
// in-process backend exercises the exact wire format.
class LoopbackBackend : public Backend {
 public:
  explicit LoopbackBackend(std::shared_ptr<Backend> inner)
      : inner_(std::move(inner)) {}

  Hello hello() override {
    return decode_as<Hello>(encode(inner_->hello()));
  }
  TaskResponse call(const TaskRequest& request) override {
    auto wire_req = decode_as<TaskRequest>(encode(request));
    return decode_as<TaskResponse>(encode(inner_->call(wire_req)));
  }

 private:
  std::shared_ptr<Backend> inner_;
};

// ---------------------------------------------------------------------------
// Stream transport: newline-delimited frames over a pair of descriptors.

class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  // Returns false on EOF before a complete line.
  bool read_line(std::string& line) {
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        line = buf_.substr(0, nl + 1);
        buf_.erase(0, nl + 1);
        return true;
      }
      char tmp[65536];
      const ssize_t n = ::read(fd_, tmp, sizeof tmp);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
};

inline bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

class StreamBackend : public Backend {
 public:
  StreamBackend(int read_fd, int write_fd)
      : read_fd_(read_fd), write_fd_(write_fd), reader_(read_fd) {}

  ~StreamBackend() override {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  }

  Hello hello() override {
    if (!hello_) hello_ = decode_as<Hello>(next_frame());
    return *hello_;
  }

  TaskResponse call(const TaskRequest& request) override {
    hello();
    if (!write_all(write_fd_, encode(request)))
      throw Error(ErrorCode::kBackend, "connection lost while sending");
    auto resp = decode_as<TaskResponse>(next_frame());
    if (resp.request_id != request.request_id)
      throw ProtocolError("/request_id", "response id '" + resp.request_id +
                                             "' does not match request '" +
                                             request.request_id + "'");
    return resp;
  }

 protected:
  std::string next_frame() {
    std::string line;
    if (!reader_.read_line(line))
      throw Error(ErrorCode::kBackend, "connection lost");
    return line;
  }

 private:
  int read_fd_;
  int write_fd_;
  LineReader reader_;
  std::optional<Hello> hello_;
};

// Spawns `/bin/sh -c command` and speaks the protocol over its stdio.
class ProcessBackend : public StreamBackend {
 public:
  static std::shared_ptr<ProcessBackend> spawn(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw Error(ErrorCode::kBackend, "pipe() failed");
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorCode::kBackend, "fork() failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::shared_ptr<ProcessBackend>(
        new ProcessBackend(from_child[0], to_child[1], pid));
  }

  ~ProcessBackend() override {
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
    }
  }

 private:
  ProcessBackend(int rfd, int wfd, pid_t pid) : StreamBackend(rfd, wfd), pid_(pid) {}
  pid_t pid_;
};

class TcpBackend : public StreamBackend {
 public:
  static std::shared_ptr<TcpBackend> connect(const std::string& host, int port) {
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
    if (fd < 0)
      throw Error(ErrorCode::kBackend, "cannot connect to " + host + ":" + port_s);
    const int dup_fd = ::dup(fd);
    return std::shared_ptr<TcpBackend>(new TcpBackend(fd, dup_fd));
  }

 private:
  TcpBackend(int rfd, int wfd) : StreamBackend(rfd, wfd) {}
};

// Worker side of the stream transport: announce capabilities, then answer
// frames until EOF. Undecodable frames get an error response with an empty
// request id.
inline void serve_stream(Backend& impl, int in_fd, int out_fd) {
  if (!write_all(out_fd, encode(impl.hello()))) return;
  LineReader reader(in_fd);
  std::string line;
  while (reader.read_line(line)) {
    TaskResponse resp;
    try {
      auto req = decode_as<TaskRequest>(line);
      try {
        resp = impl.call(req);
      } catch (const std::exception& e) {
        resp = TaskResponse::failure(req, "backend", e.what());
      }
    } catch (const std::exception& e) {
      resp.request_id = "";
      resp.outcome = TaskError{"protocol", e.what()};
    }
    if (!write_all(out_fd, encode(resp))) return;
  }
}

// ---------------------------------------------------------------------------
// Dispatcher

struct DispatchOptions {
  std::chrono::milliseconds deadline{60000};
  int retries = 1;
};

class Dispatcher {
 public:
  explicit Dispatcher(DispatchOptions opts = {}) : opts_(opts) {}
  Dispatcher(const Dispatcher&) = delete;
  Dispatcher& operator=(const Dispatcher&) = delete;
  ~Dispatcher() {
    for (auto& c : connections_) c->stop();
  }

  // Handshakes with the backend and adds it to the pool.
  void add(std::shared_ptr<Backend> backend) {
    auto hello = backend->hello();
    if (hello.protocol_version != kProtocolVersion)
      throw Error(ErrorCode::kProtocol, "backend speaks protocol version " +
                                            std::to_string(hello.protocol_version));
    std::lock_guard lock(mu_);
    connections_.push_back(
        std::make_unique<Connection>(std::move(backend), std::move(hello)));
  }

  bool supports(TaskKind kind, const std::string& model = {}) const {
    std::lock_guard lock(mu_);
    for (const auto& c : connections_)
      if (c->serves(kind, model)) return true;
    return false;
  }

  // Synchronous dispatch with deadline and retry. Never throws for
  // backend-side failures; they come back as error responses with codes
  // "timeout", "backend_crash", "protocol" or "capability".
  TaskResponse dispatch(const TaskRequest& request) {
    {
      std::lock_guard lock(log_mu_);
      ++dispatched_[request.kind];
    }
    const std::string model = request.params.is_object() && request.params.contains("model_id") &&
                                      request.params["model_id"].is_string()
                                  ? request.params["model_id"].get<std::string>()
                                  : std::string{};
    TaskResponse last;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      Connection* conn = pick(request.kind, model);
      if (!conn && attempt > 0) return last;
      if (!conn)
        return TaskResponse::failure(request, "capability",
                                     std::string("no live backend serves ") +
                                         to_string(request.kind) +
                                         (model.empty() ? "" : "/" + model));
      auto fut = conn->enqueue(request);
      if (fut.wait_for(opts_.deadline) != std::future_status::ready) {
        last = TaskResponse::failure(request, "timeout",
                                     "no response within deadline");
        continue;
      }
      last = fut.get();
      if (last.ok()) return last;
      const auto& code = last.error().code;
      if (code != "backend_crash") return last;
    }
    return last;
  }

  std::future<TaskResponse> submit(TaskRequest request) {
    return std::async(std::launch::async,
                      [this, req = std::move(request)] { return dispatch(req); });
  }

  // Number of requests per task kind that entered dispatch().
  std::map<TaskKind, std::size_t> dispatch_counts() const {
    std::lock_guard lock(log_mu_);
    return dispatched_;
  }

 private:
  class Connection {
   public:
    Connection(std::shared_ptr<Backend> backend, Hello hello)
        : backend_(std::move(backend)), hello_(std::move(hello)),
          worker_([this] { run(); }) {}
    ~Connection() { stop(); }

    bool serves(TaskKind kind, const std::string& model) const {
      if (dead_) return false;
      const auto* cap = hello_.find(kind);
      if (!cap) return false;
      if (model.empty() || cap->models.empty()) return true;
      return std::find(cap->models.begin(), cap->models.end(), model) != cap->models.end();
    }

    std::size_t load() const {
      std::lock_guard lock(mu_);
      return queue_.size() + (busy_ ? 1 : 0);
    }

    std::future<TaskResponse> enqueue(TaskRequest req) {
      std::promise<TaskResponse> p;
      auto fut = p.get_future();
      {
        std::lock_guard lock(mu_);
        queue_.push_back({std::move(req), std::move(p)});
      }
      cv_.notify_one();
      return fut;
    }

    void stop() {
      {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        stopping_ = true;
      }
      cv_.notify_all();
      if (worker_.joinable()) worker_.join();
    }

   private:
    struct Job {
      TaskRequest request;
      std::promise<TaskResponse> promise;
    };

    void run() {
      for (;;) {
        Job job;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
          if (queue_.empty()) return;
          job = std::move(queue_.front());
          queue_.pop_front();
          busy_ = true;
        }
        TaskResponse resp;
        if (dead_) {
          resp = TaskResponse::failure(job.request, "backend_crash", "connection is down");
        } else {
          try {
            resp = backend_->call(job.request);
            if (resp.request_id != job.request.request_id)
              resp = TaskResponse::failure(job.request, "protocol", "response id mismatch");
            else if (resp.ok() && std::get<TaskPayload>(resp.outcome).index() !=
                                      payload_index_for(job.request.kind))
              resp = TaskResponse::failure(job.request, "protocol", "payload shape mismatch");
          } catch (const ProtocolError& e) {
            dead_ = true;
            resp = TaskResponse::failure(job.request, "protocol", e.what());
          } catch (const std::exception& e) {
            dead_ = true;
            resp = TaskResponse::failure(job.request, "backend_crash", e.what());
          }
        }
        job.promise.set_value(std::move(resp));
        std::lock_guard lock(mu_);
        busy_ = false;
      }
    }

    std::shared_ptr<Backend> backend_;
    Hello hello_;
    std::atomic<bool> dead_{false};
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Job> queue_;
    bool busy_ = false;
    bool stopping_ = false;
    std::thread worker_;
  };

  Connection* pick(TaskKind kind, const std::string& model) {
    std::lock_guard lock(mu_);
    Connection* best = nullptr;
    std::size_t best_load = 0;
    for (auto& c : connections_) {
      if (!c->serves(kind, model)) continue;
      const auto l = c->load();
      if (!best || l < best_load) {
        best = c.get();
        best_load = l;
      }
    }
    return best;
  }

  DispatchOptions opts_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Connection>> connections_;
  mutable std::mutex log_mu_;
  std::map<TaskKind, std::size_t> dispatched_;
};

}  // namespace convcurate
