#include "bmpc/transport.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "bmpc/error.hpp"

namespace bmpc {

std::string to_string(PartyId p) { return "P" + std::to_string(index_of(p)); }

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kHandshake: return "handshake";
    case Phase::kOffline: return "offline";
    case Phase::kOnline: return "online";
  }
  return "unknown";
}

Phase phase_from_string(const std::string& s) {
  if (s == "handshake") return Phase::kHandshake;
  if (s == "offline") return Phase::kOffline;
  if (s == "online") return Phase::kOnline;
  throw ParseError("unknown phase '" + s + "'");
}

// ---------------------------------------------------------------- CommStats

void CommStats::record_send(PartyId from, PartyId to, Phase phase, std::uint64_t payload_bits,
                            std::uint64_t wire_bytes) {
  auto& e = edges_[{from, to, phase}];
  e.payload_bits += payload_bits;
  e.wire_bytes += wire_bytes;
  e.messages += 1;
}

std::uint64_t CommStats::bits(PartyId from, PartyId to, Phase phase) const {
  auto it = edges_.find({from, to, phase});
  return it == edges_.end() ? 0 : it->second.payload_bits;
}

std::uint64_t CommStats::total_bits(Phase phase) const {
  std::uint64_t total = 0;
  for (const auto& [key, c] : edges_) {
    if (std::get<2>(key) == phase) total += c.payload_bits;
  }
  return total;
}

std::uint64_t CommStats::wire_bytes() const {
  std::uint64_t total = 0;
  for (const auto& [key, c] : edges_) total += c.wire_bytes;
  return total;
}

CommStats CommStats::merge(std::span<const CommStats> parts) {
  CommStats out;
  for (const auto& s : parts) {
    for (const auto& [key, c] : s.edges_) {
      auto& e = out.edges_[key];
      e.payload_bits += c.payload_bits;
      e.wire_bytes += c.wire_bytes;
      e.messages += c.messages;
    }
    for (std::size_t i = 0; i < out.rounds_.size(); ++i) {
      out.rounds_[i] = std::max(out.rounds_[i], s.rounds_[i]);
    }
  }
  return out;
}

CommStats CommStats::operator-(const CommStats& earlier) const {
  CommStats out = *this;
  for (const auto& [key, c] : earlier.edges_) {
    auto& e = out.edges_[key];
    e.payload_bits -= c.payload_bits;
    e.wire_bytes -= c.wire_bytes;
    e.messages -= c.messages;
  }
  for (std::size_t i = 0; i < out.rounds_.size(); ++i) out.rounds_[i] -= earlier.rounds_[i];
  return out;
}

nlohmann::json CommStats::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [key, c] : edges_) {
    const auto phase = std::get<2>(key);
    if (phase == Phase::kHandshake) continue;
    nlohmann::json e;
    e["from"] = to_string(std::get<0>(key));
    e["to"] = to_string(std::get<1>(key));
    e["phase"] = to_string(phase);
    e["bits"] = c.payload_bits;
    if (c.payload_bits % 8 == 0) {
      e["bytes"] = c.payload_bits / 8;
    } else {
      e["bytes"] = static_cast<double>(c.payload_bits) / 8.0;
    }
    e["wire_bytes"] = c.wire_bytes;
    e["messages"] = c.messages;
    edges.push_back(std::move(e));
  }
  nlohmann::json j;
  j["edges"] = std::move(edges);
  j["rounds"] = {{"offline", rounds(Phase::kOffline)}, {"online", rounds(Phase::kOnline)}};
  j["wire_bytes_total"] = wire_bytes();
  return j;
}

namespace {

PartyId party_from_string(const std::string& s) {
  if (s == "P0") return PartyId::kP0;
  if (s == "P1") return PartyId::kP1;
  if (s == "P2") return PartyId::kP2;
  throw ParseError("unknown party '" + s + "'");
}

}  // namespace

CommStats CommStats::from_json(const nlohmann::json& j) {
  CommStats out;
  try {
    for (const auto& e : j.at("edges")) {
      const auto key = std::make_tuple(party_from_string(e.at("from").get<std::string>()),
                                       party_from_string(e.at("to").get<std::string>()),
                                       phase_from_string(e.at("phase").get<std::string>()));
      auto& c = out.edges_[key];
      if (e.contains("bits")) {
        c.payload_bits = e.at("bits").get<std::uint64_t>();
      } else {
        c.payload_bits = static_cast<std::uint64_t>(e.at("bytes").get<double>() * 8.0 + 0.5);
      }
      c.wire_bytes = e.value("wire_bytes", std::uint64_t{0});
      c.messages = e.value("messages", std::uint64_t{0});
    }
    out.rounds_[static_cast<int>(Phase::kOffline)] = j.at("rounds").at("offline").get<std::uint64_t>();
    out.rounds_[static_cast<int>(Phase::kOnline)] = j.at("rounds").at("online").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed CommStats JSON: ") + ex.what());
  }
  return out;
}

// ---------------------------------------------------------------- framing

Message Message::of(std::uint64_t tag, unsigned width, std::vector<std::uint64_t> words) {
  Message m;
  m.tag = tag;
  m.width = width;
  m.count = words.size();
  m.words = std::move(words);
  return m;
}

Message Message::zero_filled(std::uint64_t tag, unsigned width, std::uint64_t count) {
  Message m;
  m.tag = tag;
  m.width = width;
  m.count = count;
  return m;
}

std::uint64_t packed_bytes(std::uint64_t count, unsigned width) {
  return (count * width + 7) / 8;
}

std::vector<std::byte> pack_words(std::span<const std::uint64_t> words, unsigned width) {
  std::vector<std::byte> out(packed_bytes(words.size(), width));
  if (width % 8 == 0) {
    const unsigned wb = width / 8;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (unsigned b = 0; b < wb; ++b) {
        out[i * wb + b] = static_cast<std::byte>(words[i] >> (8 * b));
      }
    }
    return out;
  }
  std::uint64_t bitpos = 0;
  for (auto w : words) {
    for (unsigned b = 0; b < width; ++b, ++bitpos) {
      if ((w >> b) & 1) out[bitpos / 8] |= std::byte{1} << (bitpos % 8);
    }
  }
  return out;
}

std::vector<std::uint64_t> unpack_words(std::span<const std::byte> bytes, std::uint64_t count,
                                        unsigned width) {
  std::vector<std::uint64_t> out(count, 0);
  if (width % 8 == 0) {
    const unsigned wb = width / 8;
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t w = 0;
      for (unsigned b = 0; b < wb; ++b) {
        w |= static_cast<std::uint64_t>(bytes[i * wb + b]) << (8 * b);
      }
      out[i] = w;
    }
    return out;
  }
  std::uint64_t bitpos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t w = 0;
    for (unsigned b = 0; b < width; ++b, ++bitpos) {
      const auto bit = (static_cast<unsigned>(bytes[bitpos / 8]) >> (bitpos % 8)) & 1u;
      w |= static_cast<std::uint64_t>(bit) << b;
    }
    out[i] = w;
  }
  return out;
}

namespace {

void put_le(std::byte* p, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) p[i] = static_cast<std::byte>(v >> (8 * i));
}

std::uint64_t get_le(const std::byte* p, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | static_cast<std::uint64_t>(p[i]);
  return v;
}

constexpr std::size_t kZeroChunk = 1 << 20;

// ---------------------------------------------------------------- memory link

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::byte>> chunks;
  std::size_t front_offset = 0;
  bool closed = false;
};

class MemoryLink final : public Link {
 public:
  MemoryLink(std::shared_ptr<Pipe> out, std::shared_ptr<Pipe> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~MemoryLink() override { close(); }

  void write(std::span<const std::byte> data) override {
    if (data.empty()) return;
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw DisconnectError("memory link closed");
    out_->chunks.emplace_back(data.begin(), data.end());
    out_->cv.notify_all();
  }

  void read(std::span<std::byte> out, std::chrono::milliseconds timeout) override {
    std::size_t filled = 0;
    std::unique_lock lock(in_->mu);
    while (filled < out.size()) {
      if (!in_->cv.wait_for(lock, timeout,
                            [&] { return !in_->chunks.empty() || in_->closed; })) {
        throw TransportError("receive timed out (possible deadlock)");
      }
      if (in_->chunks.empty()) throw DisconnectError("peer closed memory link");
      auto& front = in_->chunks.front();
      const std::size_t avail = front.size() - in_->front_offset;
      const std::size_t take = std::min(avail, out.size() - filled);
      std::memcpy(out.data() + filled, front.data() + in_->front_offset, take);
      filled += take;
      in_->front_offset += take;
      if (in_->front_offset == front.size()) {
        in_->chunks.pop_front();
        in_->front_offset = 0;
      }
    }
  }

  void close() override {
    for (auto* p : {out_.get(), in_.get()}) {
      std::lock_guard lock(p->mu);
      p->closed = true;
      p->cv.notify_all();
    }
  }

  bool bounded_buffer() const override { return false; }

 private:
  std::shared_ptr<Pipe> out_;
  std::shared_ptr<Pipe> in_;
};

}  // namespace

std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_memory_link_pair() {
  auto ab = std::make_shared<Pipe>();
  auto ba = std::make_shared<Pipe>();
  return {std::make_unique<MemoryLink>(ab, ba), std::make_unique<MemoryLink>(ba, ab)};
}

// ---------------------------------------------------------------- endpoint

Endpoint::Endpoint(PartyId self, std::array<std::unique_ptr<Link>, 3> links)
    : self_(self), links_(std::move(links)) {}

Endpoint::~Endpoint() { close(); }

void Endpoint::close() {
  for (auto& l : links_) {
    if (l) l->close();
  }
}

Link& Endpoint::link(PartyId p) {
  auto& l = links_[index_of(p)];
  if (!l) throw TransportError("no link from " + to_string(self_) + " to " + to_string(p));
  return *l;
}

void Endpoint::check_edge(PartyId from, PartyId to, Phase phase) const {
  if (phase != phase_) {
    throw PhaseError(to_string(phase) + " message while endpoint " + to_string(self_) +
                     " is in the " + to_string(phase_) + " phase");
  }
  if (phase == Phase::kHandshake) return;
  if (to == PartyId::kP2) {
    throw PhaseError("the dealer P2 never receives application payloads (" +
                     to_string(from) + " -> P2 in " + to_string(phase) + ")");
  }
  if (phase == Phase::kOffline && from != PartyId::kP2) {
    throw PhaseError("offline traffic must come from the dealer (" + to_string(from) +
                     " -> " + to_string(to) + ")");
  }
  if (phase == Phase::kOnline && from == PartyId::kP2) {
    throw PhaseError("the dealer does not take part in the online phase");
  }
}

void Endpoint::write_frame(PartyId to, const Message& msg, Phase phase) {
  Link& l = link(to);
  std::byte header[kFrameHeaderBytes];
  put_le(header, kFrameMagic, 4);
  header[4] = static_cast<std::byte>(phase);
  put_le(header + 5, msg.tag, 8);
  put_le(header + 13, msg.count, 8);
  l.write(header);
  const std::uint64_t nbytes = packed_bytes(msg.count, msg.width);
  if (msg.is_zero_filled()) {
    std::vector<std::byte> zeros(std::min<std::uint64_t>(nbytes, kZeroChunk));
    for (std::uint64_t sent = 0; sent < nbytes;) {
      const auto n = std::min<std::uint64_t>(zeros.size(), nbytes - sent);
      l.write(std::span<const std::byte>(zeros.data(), n));
      sent += n;
    }
  } else {
    l.write(pack_words(msg.words, msg.width));
  }
}

void Endpoint::send(PartyId to, const Message& msg, Phase phase) {
  check_edge(self_, to, phase);
  if (!msg.is_zero_filled() && msg.words.size() != msg.count) {
    throw ShapeError("message word count does not match its header");
  }
  stats_.record_send(self_, to, phase, phase == Phase::kHandshake ? 0 : msg.payload_bits(),
                     kFrameHeaderBytes + packed_bytes(msg.count, msg.width));
  if (observer_) observer_(SendEvent{self_, to, phase, msg});
  write_frame(to, msg, phase);
}

Message Endpoint::read_frame(PartyId from, std::uint64_t expected_count, unsigned width,
                             Phase phase, std::optional<std::uint64_t> expected_tag,
                             bool zero_filled) {
  Link& l = link(from);
  std::byte header[kFrameHeaderBytes];
  l.read(header, timeout_);
  if (get_le(header, 4) != kFrameMagic) throw TransportError("bad frame magic");
  const auto frame_phase = static_cast<Phase>(header[4]);
  const std::uint64_t tag = get_le(header + 5, 8);
  const std::uint64_t count = get_le(header + 13, 8);
  if (frame_phase != phase) {
    throw PhaseError("received a " + to_string(frame_phase) + " frame while expecting " +
                     to_string(phase));
  }
  if (count != expected_count) {
    throw ShapeError("expected " + std::to_string(expected_count) + " words from " +
                     to_string(from) + ", frame carries " + std::to_string(count));
  }
  if (expected_tag && tag != *expected_tag) {
    throw ProtocolError("stream tag mismatch from " + to_string(from) +
                        " (correlated randomness schedule out of sync)");
  }
  const std::uint64_t nbytes = packed_bytes(count, width);
  if (zero_filled) {
    std::vector<std::byte> sink(std::min<std::uint64_t>(nbytes, kZeroChunk));
    for (std::uint64_t got = 0; got < nbytes;) {
      const auto n = std::min<std::uint64_t>(sink.size(), nbytes - got);
      l.read(std::span<std::byte>(sink.data(), n), timeout_);
      got += n;
    }
    return Message::zero_filled(tag, width, count);
  }
  std::vector<std::byte> payload(nbytes);
  l.read(payload, timeout_);
  return Message::of(tag, width, unpack_words(payload, count, width));
}

Message Endpoint::recv(PartyId from, std::uint64_t expected_count, unsigned width, Phase phase,
                       std::optional<std::uint64_t> expected_tag, bool zero_filled) {
  check_edge(from, self_, phase);
  return read_frame(from, expected_count, width, phase, expected_tag, zero_filled);
}

std::vector<Message> Endpoint::exchange(PartyId peer, const std::vector<Message>& out) {
  for (const auto& m : out) {
    check_edge(self_, peer, phase_);
    if (!m.is_zero_filled() && m.words.size() != m.count) {
      throw ShapeError("message word count does not match its header");
    }
    stats_.record_send(self_, peer, phase_, phase_ == Phase::kHandshake ? 0 : m.payload_bits(),
                       kFrameHeaderBytes + packed_bytes(m.count, m.width));
    if (observer_) observer_(SendEvent{self_, peer, phase_, m});
  }
  stats_.record_round(phase_);

  std::uint64_t total = 0;
  for (const auto& m : out) total += packed_bytes(m.count, m.width);

  std::exception_ptr write_error;
  auto write_all = [&] {
    try {
      for (const auto& m : out) write_frame(peer, m, phase_);
    } catch (...) {
      write_error = std::current_exception();
    }
  };

  std::vector<Message> in;
  in.reserve(out.size());
  if (link(peer).bounded_buffer() && total > (1u << 15)) {
    std::thread writer(write_all);
    try {
      for (const auto& m : out) {
        in.push_back(read_frame(peer, m.count, m.width, phase_, m.tag, m.is_zero_filled()));
      }
    } catch (...) {
      link(peer).close();
      writer.join();
      throw;
    }
    writer.join();
  } else {
    write_all();
    if (!write_error) {
      for (const auto& m : out) {
        in.push_back(read_frame(peer, m.count, m.width, phase_, m.tag, m.is_zero_filled()));
      }
    }
  }
  if (write_error) std::rethrow_exception(write_error);
  return in;
}

}  // namespace bmpc
