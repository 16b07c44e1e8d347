#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace bmpc {

enum class PartyId : std::uint8_t { kP0 = 0, kP1 = 1, kP2 = 2 };

// Handshake traffic is counted in wire bytes only; offline and online payload
// bits are the quantities compared against closed-form costs.
enum class Phase : std::uint8_t { kHandshake = 0, kOffline = 1, kOnline = 2 };

inline int index_of(PartyId p) { return static_cast<int>(p); }
inline PartyId party_from_index(int i) { return static_cast<PartyId>(i); }
std::string to_string(PartyId p);
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct EdgeCounters {
  std::uint64_t payload_bits = 0;
  std::uint64_t wire_bytes = 0;
  std::uint64_t messages = 0;
  bool operator==(const EdgeCounters&) const = default;
};

// Per (sender, receiver, phase) counters plus per-phase round counts. Each
// endpoint records what it sends and the exchange barriers it takes part in;
// merge() combines the three parties' views.
class CommStats {
 public:
  void record_send(PartyId from, PartyId to, Phase phase, std::uint64_t payload_bits,
                   std::uint64_t wire_bytes);
  void record_round(Phase phase) { ++rounds_[static_cast<int>(phase)]; }

  std::uint64_t bits(PartyId from, PartyId to, Phase phase) const;
  std::uint64_t total_bits(Phase phase) const;
  // Payload bytes; sub-word payloads can make this fractional.
  double total_bytes(Phase phase) const { return static_cast<double>(total_bits(phase)) / 8.0; }
  std::uint64_t wire_bytes() const;
  std::uint64_t rounds(Phase phase) const { return rounds_[static_cast<int>(phase)]; }

  const std::map<std::tuple<PartyId, PartyId, Phase>, EdgeCounters>& edges() const {
    return edges_;
  }

  // Edge counters are summed; rounds are taken as the maximum over inputs
  // since both compute parties count every barrier.
  static CommStats merge(std::span<const CommStats> parts);
  CommStats operator-(const CommStats& earlier) const;
  bool operator==(const CommStats&) const = default;

  // {"edges":[{"from","to","phase","bits","bytes","wire_bytes"}],
  //  "rounds":{"offline","online"}, "wire_bytes_total"}
  nlohmann::json to_json() const;
  static CommStats from_json(const nlohmann::json& j);

 private:
  std::map<std::tuple<PartyId, PartyId, Phase>, EdgeCounters> edges_;
  std::array<std::uint64_t, 3> rounds_{};
};

// One framed payload. Words are packed at `width` bits each. A message with
// count > 0 and no words is zero-filled: it is framed and transmitted in full
// but never materialized, which keeps accounting-only runs light.
struct Message {
  std::uint64_t tag = 0;
  unsigned width = 64;
  std::uint64_t count = 0;
  std::vector<std::uint64_t> words;

  static Message of(std::uint64_t tag, unsigned width, std::vector<std::uint64_t> words);
  static Message zero_filled(std::uint64_t tag, unsigned width, std::uint64_t count);
  bool is_zero_filled() const { return words.empty() && count > 0; }
  std::uint64_t payload_bits() const { return count * width; }
};

// Frame layout (little endian): u32 magic, u8 phase, u64 stream tag,
// u64 word count, then ceil(count * width / 8) payload bytes with words packed
// LSB-first. The width is agreed by the protocol, not carried on the wire.
inline constexpr std::uint32_t kFrameMagic = 0x43504d42;  // "BMPC"
inline constexpr std::size_t kFrameHeaderBytes = 4 + 1 + 8 + 8;

std::uint64_t packed_bytes(std::uint64_t count, unsigned width);
std::vector<std::byte> pack_words(std::span<const std::uint64_t> words, unsigned width);
std::vector<std::uint64_t> unpack_words(std::span<const std::byte> bytes,
                                        std::uint64_t count, unsigned width);

// Reliable ordered byte pipe to one peer.
class Link {
 public:
  virtual ~Link() = default;
  virtual void write(std::span<const std::byte> data) = 0;
  // Blocks until out is filled; throws TransportError on timeout and
  // DisconnectError if the peer closed.
  virtual void read(std::span<std::byte> out, std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
  // True when concurrent write and read are needed to avoid deadlock on large
  // symmetric exchanges (kernel socket buffers are bounded).
  virtual bool bounded_buffer() const = 0;
};

std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_memory_link_pair();

struct SendEvent {
  PartyId from;
  PartyId to;
  Phase phase;
  const Message& message;
};

class Endpoint {
 public:
  // links[i] is the link to party i; links[self] must be null.
  Endpoint(PartyId self, std::array<std::unique_ptr<Link>, 3> links);
  ~Endpoint();
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  PartyId self() const { return self_; }
  Phase phase() const { return phase_; }
  void set_phase(Phase phase) { phase_ = phase; }
  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }

  // Offline: only dealer-to-party edges. Online: only P0 <-> P1. Handshake:
  // any edge. The dealer never receives outside the handshake.
  void send(PartyId to, const Message& msg, Phase phase);
  Message recv(PartyId from, std::uint64_t expected_count, unsigned width, Phase phase,
               std::optional<std::uint64_t> expected_tag = std::nullopt,
               bool zero_filled = false);

  // Symmetric batched exchange with `peer`: all of `out` is sent while the
  // peer's mirror-image messages (same tag, width and count) are received.
  // Counts as exactly one round in the current phase.
  std::vector<Message> exchange(PartyId peer, const std::vector<Message>& out);

  const CommStats& stats() const { return stats_; }
  void set_observer(std::function<void(const SendEvent&)> observer) {
    observer_ = std::move(observer);
  }

  void close();

 private:
  void check_edge(PartyId from, PartyId to, Phase phase) const;
  void write_frame(PartyId to, const Message& msg, Phase phase);
  Message read_frame(PartyId from, std::uint64_t expected_count, unsigned width, Phase phase,
                     std::optional<std::uint64_t> expected_tag, bool zero_filled);
  Link& link(PartyId p);

  PartyId self_;
  std::array<std::unique_ptr<Link>, 3> links_;
  Phase phase_ = Phase::kHandshake;
  std::chrono::milliseconds timeout_{60000};
  CommStats stats_;
  std::function<void(const SendEvent&)> observer_;
};

}  // namespace bmpc
