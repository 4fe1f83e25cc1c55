// SPDX-License-Identifier: Apache-2.0
#include "promptdb/service.hpp"

#include <json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace promptdb {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxLineBytes = 4 * 1024 * 1024;

json error_response(const std::string& message) {
  json j;
  j["ok"] = false;
  j["error"] = message;
  return j;
}

}  // namespace

Service::Service(std::shared_ptr<const DatabaseSnapshot> snapshot, SelectionPlan plan,
                 std::uint64_t face_oracle_seed)
    : snapshot_(std::move(snapshot)),
      plan_(std::move(plan)),
      face_oracle_seed_(face_oracle_seed) {
  if (!snapshot_) raise(ErrorCode::EmptyDatabase, "service needs a snapshot");
  plan_.validate();
}

Service::~Service() { stop(); }

std::shared_ptr<const DatabaseSnapshot> Service::current_snapshot() const {
  std::lock_guard<std::mutex> lk(snapshot_mu_);
  return snapshot_;
}

void Service::swap_snapshot(std::shared_ptr<const DatabaseSnapshot> snapshot) {
  if (!snapshot) raise(ErrorCode::EmptyDatabase, "cannot swap in a null snapshot");
  std::lock_guard<std::mutex> lk(snapshot_mu_);
  snapshot_ = std::move(snapshot);
}

std::size_t Service::handle_count() const {
  std::lock_guard<std::mutex> lk(handles_mu_);
  return handles_.size();
}

std::string Service::handle_line(const std::string& line) {
  json response;
  try {
    json request;
    try {
      request = json::parse(line);
    } catch (const json::exception& e) {
      return error_response(std::string("parse: ") + e.what()).dump();
    }
    if (!request.is_object() || !request.contains("op") || !request["op"].is_string()) {
      return error_response("request must be an object with a string 'op'").dump();
    }
    const std::string op = request["op"].get<std::string>();

    if (op == "register") {
      if (!request.contains("request")) {
        return error_response("register needs a 'request' payload").dump();
      }
      const RegistrationRequest reg =
          RegistrationRequest::from_json_text(request["request"].dump());
      auto snapshot = current_snapshot();
      ToyFaceVoiceOracle oracle(std::max(snapshot->dims.face, 1),
                                std::max(snapshot->dims.speaker, 1),
                                face_oracle_seed_);
      CandidateSubset subset = register_request(*snapshot, reg, &oracle);
      const std::int64_t handle = next_handle_.fetch_add(1);
      {
        std::lock_guard<std::mutex> lk(handles_mu_);
        handles_.emplace(handle, Handle{subset, snapshot});
      }
      response["ok"] = true;
      response["handle"] = handle;
      response["subset"] = json::parse(subset.to_json_text());
    } else if (op == "select") {
      if (!request.contains("handle") || !request["handle"].is_number_integer()) {
        return error_response("select needs an integer 'handle'").dump();
      }
      const std::int64_t handle = request["handle"].get<std::int64_t>();
      Handle entry;
      {
        std::lock_guard<std::mutex> lk(handles_mu_);
        auto it = handles_.find(handle);
        if (it == handles_.end()) {
          return error_response("unknown handle " + std::to_string(handle)).dump();
        }
        entry = it->second;
      }
      if (!request.contains("query")) {
        return error_response("select needs a 'query' payload").dump();
      }
      const json& qj = request["query"];
      if (!qj.is_object()) return error_response("query must be an object").dump();
      QueryFeatures query;
      if (qj.contains("speaking_rate")) query.speaking_rate = qj["speaking_rate"].get<double>();
      if (qj.contains("pitch_mean_hz")) query.pitch_mean_hz = qj["pitch_mean_hz"].get<double>();
      auto read_vec = [](const json& v) {
        Vec out(static_cast<Eigen::Index>(v.size()));
        Eigen::Index i = 0;
        for (const auto& x : v) out[i++] = x.get<float>();
        return out;
      };
      if (qj.contains("speaker_vec")) query.speaker_vec = read_vec(qj["speaker_vec"]);
      if (qj.contains("emotion_vec")) query.emotion_vec = read_vec(qj["emotion_vec"]);

      std::optional<double> deadline_s;
      if (request.contains("deadline_ms") && !request["deadline_ms"].is_null()) {
        deadline_s = request["deadline_ms"].get<double>() / 1000.0;
      }
      const CascadeResult result = run_cascade(plan_, entry.subset, *entry.snapshot,
                                               query, deadline_s);
      response["ok"] = true;
      response["result"] = json::parse(result.to_json_text());
    } else if (op == "status") {
      auto snapshot = current_snapshot();
      response["ok"] = true;
      response["records"] = snapshot->size();
      response["handles"] = handle_count();
      response["plan_stages"] = plan_.stages.size();
    } else {
      return error_response("unknown op '" + op + "'").dump();
    }
  } catch (const Error& e) {
    return error_response(e.what()).dump();
  } catch (const std::exception& e) {
    return error_response(std::string("internal: ") + e.what()).dump();
  }
  return response.dump();
}

void Service::start(const std::string& host, std::uint16_t port) {
  if (running_.load()) raise(ErrorCode::BadInput, "service already running");

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) raise(ErrorCode::IoFailure, "socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    raise(ErrorCode::BadInput, "bad bind address " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    raise(ErrorCode::IoFailure, "bind failed on " + host + ":" + std::to_string(port));
  }
  if (::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    raise(ErrorCode::IoFailure, "listen failed");
  }

  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);

  running_.store(true);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Service::stop() {
  if (!running_.exchange(false)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  // No new handlers can start now; wait for in-flight connections to wind
  // down (they observe running_ within one poll interval).
  std::unique_lock<std::mutex> lk(conns_mu_);
  conns_cv_.wait(lk, [this] { return active_conns_ == 0; });
}

void Service::accept_loop() {
  while (running_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 200);
    if (!running_.load()) break;
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    {
      std::lock_guard<std::mutex> lk(conns_mu_);
      ++active_conns_;
    }
    std::thread([this, fd] {
      connection_loop(fd);
      {
        std::lock_guard<std::mutex> lk(conns_mu_);
        --active_conns_;
      }
      conns_cv_.notify_all();
    }).detach();
  }
}

void Service::connection_loop(int fd) {
  std::string buffer;
  char chunk[8192];
  bool overlong = false;

  const auto send_all = [&](const std::string& text) {
    std::size_t sent = 0;
    while (sent < text.size()) {
      const ssize_t n = ::send(fd, text.data() + sent, text.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  };

  while (running_.load()) {
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 200);
    if (!running_.load()) break;
    if (ready <= 0) continue;
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));

    std::size_t start = 0;
    for (;;) {
      const std::size_t nl = buffer.find('\n', start);
      if (nl == std::string::npos) break;
      std::string line = buffer.substr(start, nl - start);
      start = nl + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string reply;
      if (overlong) {
        overlong = false;  // the truncated tail of an oversized line
        reply = error_response("line too long").dump();
      } else {
        reply = handle_line(line);
      }
      reply += '\n';
      if (!send_all(reply)) {
        ::close(fd);
        return;
      }
    }
    buffer.erase(0, start);
    if (buffer.size() > kMaxLineBytes) {
      buffer.clear();
      overlong = true;
    }
  }
  ::close(fd);
}

}  // namespace promptdb
