#include "tokendrive/arbitration/remote.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <json.hpp>

namespace tokendrive::arb {

namespace {

constexpr uint32_t kWireVersion = 1;
constexpr uint32_t kMaxFrame = 1 << 20;

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// poll-guarded full read/write with an absolute deadline; false on timeout or
// socket error.
bool read_exact(int fd, unsigned char* buf, size_t n, int64_t deadline_ms) {
  size_t got = 0;
  while (got < n) {
    const int64_t left = deadline_ms - now_ms();
    if (left <= 0) return false;
    pollfd p{fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, static_cast<int>(left));
    if (pr <= 0) return false;
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r <= 0) return false;
    got += static_cast<size_t>(r);
  }
  return true;
}

bool write_exact(int fd, const unsigned char* buf, size_t n, int64_t deadline_ms) {
  size_t sent = 0;
  while (sent < n) {
    const int64_t left = deadline_ms - now_ms();
    if (left <= 0) return false;
    pollfd p{fd, POLLOUT, 0};
    const int pr = ::poll(&p, 1, static_cast<int>(left));
    if (pr <= 0) return false;
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r <= 0) return false;
    sent += static_cast<size_t>(r);
  }
  return true;
}

// Frame: 4-byte big-endian payload length, then the payload bytes.
bool write_frame(int fd, const std::string& payload, int64_t deadline_ms) {
  const uint32_t n = static_cast<uint32_t>(payload.size());
  unsigned char hdr[4] = {static_cast<unsigned char>(n >> 24), static_cast<unsigned char>(n >> 16),
                          static_cast<unsigned char>(n >> 8), static_cast<unsigned char>(n)};
  if (!write_exact(fd, hdr, 4, deadline_ms)) return false;
  return write_exact(fd, reinterpret_cast<const unsigned char*>(payload.data()), payload.size(),
                     deadline_ms);
}

bool read_frame(int fd, std::string& payload, int64_t deadline_ms) {
  unsigned char hdr[4];
  if (!read_exact(fd, hdr, 4, deadline_ms)) return false;
  const uint32_t n = static_cast<uint32_t>(hdr[0]) << 24 | static_cast<uint32_t>(hdr[1]) << 16 |
                     static_cast<uint32_t>(hdr[2]) << 8 | static_cast<uint32_t>(hdr[3]);
  if (n > kMaxFrame) return false;
  payload.resize(n);
  return read_exact(fd, reinterpret_cast<unsigned char*>(payload.data()), n, deadline_ms);
}

int connect_with_timeout(const std::string& host, int port, int64_t deadline_ms) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    return -1;
  }
  ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK);
  const int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS) {
    ::close(fd);
    return -1;
  }
  if (rc != 0) {
    pollfd p{fd, POLLOUT, 0};
    const int64_t left = deadline_ms - now_ms();
    if (left <= 0 || ::poll(&p, 1, static_cast<int>(left)) <= 0) {
      ::close(fd);
      return -1;
    }
    int err = 0;
    socklen_t len = sizeof err;
    if (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) {
      ::close(fd);
      return -1;
    }
  }
  return fd;
}

}  // namespace

std::optional<std::string> RemoteAdviser::correct(const lang::DrivingSentence& prompt) {
  last_error_ = LastError::none;
  const int64_t deadline = now_ms() + static_cast<int64_t>(cfg_.timeout_s * 1000.0);
  const int fd = connect_with_timeout(cfg_.host, cfg_.port, deadline);
  if (fd < 0) {
    last_error_ = LastError::connect_failed;
    return std::nullopt;
  }

  nlohmann::json request{{"version", kWireVersion}, {"prompt_text", prompt.text}};
  std::string reply_raw;
  const bool ok =
      write_frame(fd, request.dump(), deadline) && read_frame(fd, reply_raw, deadline);
  ::close(fd);
  if (!ok) {
    last_error_ = LastError::timeout;
    return std::nullopt;
  }
  try {
    const auto reply = nlohmann::json::parse(reply_raw);
    if (reply.at("version").get<uint32_t>() != kWireVersion) {
      last_error_ = LastError::malformed_reply;
      return std::nullopt;
    }
    return reply.at("completion_text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    last_error_ = LastError::malformed_reply;
    return std::nullopt;
  }
}

AdviserServer::AdviserServer(Handler handler) : handler_(std::move(handler)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("adviser server: socket failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("adviser server: bind/listen failed");
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::thread(&AdviserServer::serve_loop, this);
}

void AdviserServer::serve_loop() {
  while (!stopping_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int pr = ::poll(&p, 1, 50);
    if (pr <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int64_t deadline = now_ms() + 5000;
    std::string payload;
    if (read_frame(fd, payload, deadline)) {
      std::string reply;
      try {
        const auto request = nlohmann::json::parse(payload);
        const std::string prompt = request.at("prompt_text").get<std::string>();
        nlohmann::json out{{"version", kWireVersion}, {"completion_text", handler_(prompt)}};
        reply = out.dump();
      } catch (const std::exception&) {
        reply = "{}";
      }
      write_frame(fd, reply, deadline);
    }
    ::close(fd);
  }
}

void AdviserServer::stop() {
  if (!stopping_.exchange(true) && thread_.joinable()) thread_.join();
}

AdviserServer::~AdviserServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

}  // namespace tokendrive::arb
