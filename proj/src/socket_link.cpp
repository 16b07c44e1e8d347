#include "bmpc/socket_link.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "bmpc/error.hpp"

namespace bmpc {
namespace {

std::string sys_error(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

class SocketLink final : public Link {
 public:
  explicit SocketLink(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~SocketLink() override {
    close();
    ::close(fd_);
  }

  void write(std::span<const std::byte> data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EPIPE || errno == ECONNRESET) throw DisconnectError("peer closed socket");
        throw TransportError(sys_error("send"));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void read(std::span<std::byte> out, std::chrono::milliseconds timeout) override {
    std::size_t got = 0;
    while (got < out.size()) {
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(sys_error("poll"));
      }
      if (rc == 0) throw TransportError("receive timed out (possible deadlock)");
      const auto n = ::recv(fd_, out.data() + got, out.size() - got, 0);
      if (n == 0) throw DisconnectError("peer closed socket");
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        if (errno == ECONNRESET) throw DisconnectError("peer reset socket");
        throw TransportError(sys_error("recv"));
      }
      got += static_cast<std::size_t>(n);
    }
  }

  void close() override { ::shutdown(fd_, SHUT_RDWR); }

  bool bounded_buffer() const override { return true; }

 private:
  int fd_;
};

sockaddr_in resolve(const PeerAddress& a) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(a.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw ConfigError("cannot resolve host '" + a.host + "'");
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(a.port);
  return addr;
}

int listen_on(const PeerAddress& a) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(sys_error("socket"));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto addr = resolve(a);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(fd, 4) < 0) {
    const auto msg = sys_error("cannot listen on " + a.host + ":" + std::to_string(a.port));
    ::close(fd);
    throw TransportError(msg);
  }
  return fd;
}

int dial(const PeerAddress& a, std::chrono::steady_clock::time_point deadline) {
  const auto addr = resolve(a);
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError(sys_error("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) return fd;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("cannot connect to " + a.host + ":" + std::to_string(a.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace

std::array<std::unique_ptr<Link>, 3> connect_mesh(PartyId self,
                                                  const std::array<PeerAddress, 3>& peers,
                                                  std::chrono::milliseconds timeout) {
  const int me = index_of(self);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::array<std::unique_ptr<Link>, 3> links;
  const int lfd = listen_on(peers[me]);
  try {
    for (int j = me + 1; j < 3; ++j) {
      const int fd = dial(peers[j], deadline);
      auto link = std::make_unique<SocketLink>(fd);
      const std::byte id{static_cast<unsigned char>(me)};
      link->write(std::span<const std::byte>(&id, 1));
      links[j] = std::move(link);
    }
    for (int accepted = 0; accepted < me;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      pollfd pfd{lfd, POLLIN, 0};
      if (left.count() <= 0 || ::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) {
        throw TransportError("timed out waiting for lower-numbered parties to connect");
      }
      const int fd = ::accept(lfd, nullptr, nullptr);
      if (fd < 0) continue;
      auto link = std::make_unique<SocketLink>(fd);
      std::byte id{};
      link->read(std::span<std::byte>(&id, 1), timeout);
      const int peer = static_cast<int>(id);
      if (peer >= me || links[peer]) throw HandshakeError("unexpected party id on connect");
      links[peer] = std::move(link);
      ++accepted;
    }
  } catch (...) {
    ::close(lfd);
    throw;
  }
  ::close(lfd);
  return links;
}

}  // namespace bmpc
