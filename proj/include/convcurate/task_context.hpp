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

#include <cstdio>
#include <future>
#include <map>
#include <string>

#include "convcurate/dispatcher.hpp"
#include "convcurate/protocol.hpp"

namespace convcurate {

// Per-file request factory and timing ledger. Request ids are sequential
// per file, so they are stable regardless of how files are spread across
// workers. Not thread-safe: one file, one owner.
class TaskContext {
 public:
  TaskContext(Dispatcher& dispatcher, std::string id_prefix)
      : dispatcher_(&dispatcher), prefix_(std::move(id_prefix)) {}

  // Provenance hints attached to every request. Real workers ignore them;
  // mock backends use them to look up fixture sidecars.
  void set_source(std::string path, double gain) {
    source_ = std::move(path);
    gain_ = gain;
  }

  TaskRequest request(TaskKind kind, AudioPayload payload,
                      nlohmann::json params = nlohmann::json::object(),
                      double source_start_s = 0.0) {
    char id[32];
    std::snprintf(id, sizeof id, "#%06llu", static_cast<unsigned long long>(next_id_++));
    ++requested_[kind];
    TaskRequest r;
    r.request_id = prefix_ + id;
    r.kind = kind;
    if (!source_.empty()) {
      params["source"] = source_;
      params["source_gain"] = gain_;
      if (const auto* f = std::get_if<FileRef>(&payload))
        params["source_start_s"] = f->interval.start_s;
      else
        params["source_start_s"] = source_start_s;
    }
    r.payload = std::move(payload);
    r.params = std::move(params);
    return r;
  }

  TaskResponse run(const std::string& stage, const TaskRequest& req) {
    auto resp = dispatcher_->dispatch(req);
    account(stage, resp);
    return resp;
  }

  std::future<TaskResponse> submit(TaskRequest req) {
    return dispatcher_->submit(std::move(req));
  }

  void account(const std::string& stage, const TaskResponse& resp) {
    stage_seconds_[stage] += resp.timing_s;
  }

  const std::map<std::string, double>& stage_seconds() const { return stage_seconds_; }
  // Requests created per task kind, retries not counted.
  const std::map<TaskKind, std::size_t>& requested() const { return requested_; }
  Dispatcher& dispatcher() { return *dispatcher_; }

 private:
  Dispatcher* dispatcher_;
  std::string prefix_;
  unsigned long long next_id_ = 0;
  std::string source_;
  double gain_ = 1.0;
  std::map<std::string, double> stage_seconds_;
  std::map<TaskKind, std::size_t> requested_;
};

}  // namespace convcurate
