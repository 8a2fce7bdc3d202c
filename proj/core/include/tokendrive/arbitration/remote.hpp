#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "tokendrive/arbitration/arbitrate.hpp"

namespace tokendrive::arb {

struct RemoteConfig {
  std::string host = "127.0.0.1";
  int port = 0;
  double timeout_s = 2.0;
  int latency_ticks = 20;  // 2 s of simulated time at dt = 0.1
};

// Wire adapter for an external correction model. One request/response per
// call over TCP with length-prefixed JSON frames (docs/formats.md). Timeouts
// and malformed replies are non-fatal: the call reports "no correction".
class RemoteAdviser : public Adviser {
 public:
  enum class LastError { none, connect_failed, timeout, malformed_reply };

  explicit RemoteAdviser(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  std::optional<std::string> correct(const lang::DrivingSentence& prompt) override;
  int latency_ticks() const override { return cfg_.latency_ticks; }
  LastError last_error() const { return last_error_; }

 private:
  RemoteConfig cfg_;
  LastError last_error_ = LastError::none;
};

// Minimal single-threaded server speaking the same protocol; the reference
// implementation of the framing and the loopback peer used in tests. Binds an
// ephemeral port on 127.0.0.1.
class AdviserServer {
 public:
  using Handler = std::function<std::string(const std::string& prompt_text)>;

  explicit AdviserServer(Handler handler);
  ~AdviserServer();

  int port() const { return port_; }
  void stop();

 private:
  void serve_loop();

  Handler handler_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

}  // namespace tokendrive::arb
