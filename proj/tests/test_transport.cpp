#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "bmpc/error.hpp"
#include "bmpc/party.hpp"
#include "bmpc/proto_bm.hpp"
#include "bmpc/socket_link.hpp"
#include "bmpc/transport.hpp"
#include "support.hpp"

using namespace bmpc;

namespace {

struct Trio {
  std::array<std::unique_ptr<Endpoint>, 3> ep;
  Trio() {
    std::array<std::array<std::unique_ptr<Link>, 3>, 3> links;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        auto [a, b] = make_memory_link_pair();
        links[i][j] = std::move(a);
        links[j][i] = std::move(b);
      }
    for (int i = 0; i < 3; ++i)
      ep[i] = std::make_unique<Endpoint>(party_from_index(i), std::move(links[i]));
    for (auto& e : ep) e->set_timeout(std::chrono::milliseconds(2000));
  }
};

std::vector<std::uint64_t> iota_words(std::size_t n) {
  std::vector<std::uint64_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i * 0x9e3779b97f4a7c15ULL;
  return v;
}

}  // namespace

TEST(Pack, RoundTripWidths) {
  std::mt19937_64 rng(1);
  for (unsigned width : {1u, 7u, 19u, 32u, 38u, 63u, 64u}) {
    const Word m = width == 64 ? ~Word{0} : (Word{1} << width) - 1;
    std::vector<std::uint64_t> w(101);
    for (auto& x : w) x = rng() & m;
    const auto bytes = pack_words(w, width);
    EXPECT_EQ(bytes.size(), packed_bytes(w.size(), width));
    EXPECT_EQ(unpack_words(bytes, w.size(), width), w);
  }
  EXPECT_EQ(packed_bytes(100, 64), 800u);
  EXPECT_EQ(packed_bytes(3, 19), 8u);
}

TEST(Transport, SendCountsBytes) {
  Trio t;
  t.ep[0]->set_phase(Phase::kOnline);
  t.ep[1]->set_phase(Phase::kOnline);
  t.ep[0]->send(PartyId::kP1, Message::of(5, 64, iota_words(100)), Phase::kOnline);
  const auto m = t.ep[1]->recv(PartyId::kP0, 100, 64, Phase::kOnline, 5);
  EXPECT_EQ(m.words, iota_words(100));
  const auto& s = t.ep[0]->stats();
  EXPECT_EQ(s.bits(PartyId::kP0, PartyId::kP1, Phase::kOnline), 6400u);
  EXPECT_EQ(s.total_bytes(Phase::kOnline), 800.0);
  EXPECT_EQ(s.wire_bytes(), 800u + kFrameHeaderBytes);
}

TEST(Transport, ShapeMismatch) {
  Trio t;
  t.ep[0]->set_phase(Phase::kOnline);
  t.ep[1]->set_phase(Phase::kOnline);
  t.ep[0]->send(PartyId::kP1, Message::of(5, 64, iota_words(10)), Phase::kOnline);
  EXPECT_THROW(t.ep[1]->recv(PartyId::kP0, 11, 64, Phase::kOnline), ShapeError);
}

TEST(Transport, TagMismatch) {
  Trio t;
  t.ep[0]->set_phase(Phase::kOnline);
  t.ep[1]->set_phase(Phase::kOnline);
  t.ep[0]->send(PartyId::kP1, Message::of(5, 64, iota_words(2)), Phase::kOnline);
  EXPECT_THROW(t.ep[1]->recv(PartyId::kP0, 2, 64, Phase::kOnline, 6), ProtocolError);
}

TEST(Transport, PhaseRules) {
  Trio t;
  for (auto& e : t.ep) e->set_phase(Phase::kOffline);
  // Offline traffic only flows from the dealer.
  EXPECT_THROW(t.ep[0]->send(PartyId::kP1, Message::of(1, 64, {1}), Phase::kOffline), PhaseError);
  EXPECT_THROW(t.ep[0]->send(PartyId::kP2, Message::of(1, 64, {1}), Phase::kOffline), PhaseError);
  EXPECT_NO_THROW(t.ep[2]->send(PartyId::kP1, Message::of(1, 64, {1}), Phase::kOffline));
  EXPECT_THROW(t.ep[2]->recv(PartyId::kP1, 1, 64, Phase::kOffline), PhaseError);
  // The dealer is not part of the online phase.
  for (auto& e : t.ep) e->set_phase(Phase::kOnline);
  EXPECT_THROW(t.ep[2]->send(PartyId::kP0, Message::of(1, 64, {1}), Phase::kOnline), PhaseError);
  // Sending in a phase the endpoint is not in.
  EXPECT_THROW(t.ep[0]->send(PartyId::kP1, Message::of(1, 64, {1}), Phase::kOffline), PhaseError);
}

TEST(Transport, ReceiveTimeout) {
  Trio t;
  t.ep[1]->set_phase(Phase::kOnline);
  t.ep[1]->set_timeout(std::chrono::milliseconds(50));
  EXPECT_THROW(t.ep[1]->recv(PartyId::kP0, 1, 64, Phase::kOnline), TransportError);
}

TEST(Transport, ExchangeIsOneRound) {
  Trio t;
  t.ep[0]->set_phase(Phase::kOnline);
  t.ep[1]->set_phase(Phase::kOnline);
  std::vector<Message> got1;
  std::thread th([&] {
    got1 = t.ep[1]->exchange(PartyId::kP0, {Message::of(1, 64, {11, 12}), Message::of(2, 19, {13})});
  });
  const auto got0 =
      t.ep[0]->exchange(PartyId::kP1, {Message::of(1, 64, {1, 2}), Message::of(2, 19, {3})});
  th.join();
  EXPECT_EQ(got0[0].words, (std::vector<std::uint64_t>{11, 12}));
  EXPECT_EQ(got0[1].words, (std::vector<std::uint64_t>{13}));
  EXPECT_EQ(got1[0].words, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(t.ep[0]->stats().rounds(Phase::kOnline), 1u);
  EXPECT_EQ(t.ep[0]->stats().total_bits(Phase::kOnline), 2 * 64u + 19u);
}

TEST(Transport, ZeroFilledFrames) {
  Trio t;
  t.ep[0]->set_phase(Phase::kOnline);
  t.ep[1]->set_phase(Phase::kOnline);
  t.ep[0]->send(PartyId::kP1, Message::zero_filled(3, 64, 1000), Phase::kOnline);
  const auto m = t.ep[1]->recv(PartyId::kP0, 1000, 64, Phase::kOnline, 3, true);
  EXPECT_TRUE(m.is_zero_filled());
  EXPECT_EQ(t.ep[0]->stats().total_bytes(Phase::kOnline), 8000.0);
}

TEST(CommStats, MergeAndJson) {
  CommStats a, b;
  a.record_send(PartyId::kP0, PartyId::kP1, Phase::kOnline, 640, 101);
  a.record_round(Phase::kOnline);
  b.record_send(PartyId::kP1, PartyId::kP0, Phase::kOnline, 640, 101);
  b.record_send(PartyId::kP2, PartyId::kP1, Phase::kOffline, 64, 29);
  b.record_round(Phase::kOnline);
  const std::array<CommStats, 2> parts = {a, b};
  const auto m = CommStats::merge(parts);
  EXPECT_EQ(m.total_bits(Phase::kOnline), 1280u);
  EXPECT_EQ(m.total_bits(Phase::kOffline), 64u);
  EXPECT_EQ(m.rounds(Phase::kOnline), 1u);
  EXPECT_EQ(CommStats::from_json(m.to_json()), m);
  EXPECT_EQ((m - a).total_bits(Phase::kOnline), 640u);
}

// The same protocol run over TCP sockets and over in-memory links must
// account identically.
TEST(Transport, SocketAndLocalSimStatsAgree) {
  const RingParams p{64, 14};
  std::mt19937_64 rng(21);
  const auto spec = BilinearSpec::matmul(3, 4, 2);
  const auto as = share(testing_support::random_tensor(spec.shape_a(), rng, p), rng, p);
  const auto bs = share(testing_support::random_tensor(spec.shape_b(), rng, p), rng, p);
  const Job job = [&](Party& party) {
    const auto a = party.input(as), b = party.input(bs);
    auto c = bm_multiply(party, spec, a, b).c;
    open(party, c);
  };
  const auto sim = run_local_sim(p, 3, job);

  std::array<PeerAddress, 3> peers;
  const std::uint16_t base = static_cast<std::uint16_t>(20000 + (std::random_device{}() % 20000));
  for (int i = 0; i < 3; ++i) peers[i].port = static_cast<std::uint16_t>(base + i);
  std::array<CommStats, 3> stats;
  std::array<std::exception_ptr, 3> errors;
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&, i] {
      try {
        const auto id = party_from_index(i);
        Endpoint ep(id, connect_mesh(id, peers, std::chrono::milliseconds(10000)));
        const auto k0 = PrfKey::derive(3, KeyPair::kP0P2);
        const auto k1 = PrfKey::derive(3, KeyPair::kP1P2);
        Party party(id, ep, p, id == PartyId::kP1 ? std::nullopt : std::optional(k0),
                    id == PartyId::kP0 ? std::nullopt : std::optional(k1), {});
        run_job(party, job);
        stats[i] = ep.stats();
        ep.close();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(stats[i], sim.per_party[i]) << "party " << i;
  EXPECT_EQ(CommStats::merge(stats), sim.merged);
}
