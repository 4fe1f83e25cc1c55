// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "promptdb/cascade.hpp"
#include "promptdb/registration.hpp"
#include "promptdb/snapshot.hpp"

namespace promptdb {

/// Line-delimited JSON over TCP: one request object per line, one response
/// per line. Ops: register (returns a handle valid for the server's
/// lifetime), select (runs the cascade against a handle), status. Malformed
/// lines and unknown ops get an error response; the connection stays usable.
class Service {
 public:
  Service(std::shared_ptr<const DatabaseSnapshot> snapshot, SelectionPlan plan,
          std::uint64_t face_oracle_seed = 20250808);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts accepting; port 0 picks an ephemeral port.
  void start(const std::string& host, std::uint16_t port);

  /// Stops accepting, lets in-flight requests finish, joins all handlers.
  void stop();

  std::uint16_t port() const { return port_; }
  std::size_t handle_count() const;

  /// Atomic snapshot swap; registrations after the swap see the new
  /// snapshot, existing handles keep the one they were registered against.
  void swap_snapshot(std::shared_ptr<const DatabaseSnapshot> snapshot);

  /// Request handling, exposed for in-process use and differential tests.
  std::string handle_line(const std::string& line);

 private:
  struct Handle {
    CandidateSubset subset;
    std::shared_ptr<const DatabaseSnapshot> snapshot;
  };

  std::shared_ptr<const DatabaseSnapshot> current_snapshot() const;

  void accept_loop();
  void connection_loop(int fd);

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const DatabaseSnapshot> snapshot_;
  SelectionPlan plan_;
  std::uint64_t face_oracle_seed_;

  mutable std::mutex handles_mu_;
  std::map<std::int64_t, Handle> handles_;
  std::atomic<std::int64_t> next_handle_{1};

  std::atomic<bool> running_{false};
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;

  // Detached connection handlers, drained on stop().
  std::mutex conns_mu_;
  std::condition_variable conns_cv_;
  std::size_t active_conns_ = 0;
};

}  // namespace promptdb
