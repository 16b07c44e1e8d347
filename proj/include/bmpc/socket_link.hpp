#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "bmpc/transport.hpp"

namespace bmpc {

struct PeerAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Builds the three-party TCP mesh. Every party listens on its own address;
// the lower-numbered party of each pair dials the higher one and announces
// its id in a single byte. Retries until `timeout` elapses.
std::array<std::unique_ptr<Link>, 3> connect_mesh(PartyId self,
                                                  const std::array<PeerAddress, 3>& peers,
                                                  std::chrono::milliseconds timeout);

}  // namespace bmpc
