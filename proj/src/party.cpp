#include "bmpc/party.hpp"

#include <exception>
#include <mutex>
#include <thread>

#include "bmpc/error.hpp"

namespace bmpc {

Party::Party(PartyId id, Endpoint& endpoint, const RingParams& params,
             std::optional<PrfKey> key0, std::optional<PrfKey> key1, Options options)
    : id_(id),
      endpoint_(endpoint),
      params_(params),
      key0_(std::move(key0)),
      key1_(std::move(key1)),
      options_(options) {
  params_.validate();
  if (id_ == PartyId::kP0 && !key0_) throw ConfigError("P0 needs the P0-P2 key");
  if (id_ == PartyId::kP1 && !key1_) throw ConfigError("P1 needs the P1-P2 key");
  if (id_ == PartyId::kP2 && (!key0_ || !key1_)) throw ConfigError("P2 needs both keys");
  // A compute party must not hold the other party's key.
  if (id_ == PartyId::kP0) key1_.reset();
  if (id_ == PartyId::kP1) key0_.reset();
}

void Party::begin_stage(Stage stage) {
  stage_ = stage;
  invocations_.clear();
  endpoint_.set_phase(stage == Stage::kOnline ? Phase::kOnline : Phase::kOffline);
}

std::uint64_t Party::next_invocation(std::string_view protocol) {
  auto it = invocations_.find(protocol);
  if (it == invocations_.end()) it = invocations_.emplace(std::string(protocol), 0).first;
  return it->second++;
}

bool Party::holds(KeyPair pair) const {
  return pair == KeyPair::kP0P2 ? key0_.has_value() : key1_.has_value();
}

const PrfKey& Party::key(KeyPair pair) const {
  const auto& k = pair == KeyPair::kP0P2 ? key0_ : key1_;
  if (!k) throw ProtocolError(to_string(id_) + " does not hold the requested PRF key");
  return *k;
}

PrfStream Party::stream(KeyPair pair, std::uint64_t stream_id) const {
  return PrfStream(key(pair), stream_id);
}

void Party::push_record(CorrelationRecord record) { records_.push_back(std::move(record)); }

CorrelationRecord Party::pop_record(std::uint64_t expected_tag) {
  if (records_.empty()) throw ProtocolError("no preprocessed correlation left for this call");
  CorrelationRecord r = std::move(records_.front());
  records_.pop_front();
  if (r.tag != expected_tag) {
    throw ProtocolError("preprocessed correlation out of order (schedule desync)");
  }
  return r;
}

FixedTensor Party::input(const SharePair& shares) const {
  const auto& t = shares.first.tensor;
  if (!computing() || is_dealer()) return FixedTensor(t.shape(), t.scale());
  return index() == 0 ? shares.first.tensor : shares.second.tensor;
}

void Party::keep(std::array<FixedTensor, 2>& slot, const FixedTensor& share) const {
  if (online() && !is_dealer()) slot[index()] = share;
}

void run_job(Party& party, const Job& job) {
  switch (party.id()) {
    case PartyId::kP2:
      party.begin_stage(Stage::kDealer);
      job(party);
      break;
    case PartyId::kP1:
      party.begin_stage(Stage::kPreprocess);
      job(party);
      party.begin_stage(Stage::kOnline);
      job(party);
      if (party.pending_records() != 0) {
        throw ProtocolError("dealer sent more correlations than the online run consumed");
      }
      break;
    case PartyId::kP0:
      party.begin_stage(Stage::kOnline);
      job(party);
      break;
  }
}

void handshake(Endpoint& endpoint, const std::array<std::uint64_t, 3>& digest) {
  endpoint.set_phase(Phase::kHandshake);
  const auto self = endpoint.self();
  for (int i = 0; i < 3; ++i) {
    const auto peer = party_from_index(i);
    if (peer != self) endpoint.send(peer, Message::of(0, 64, {digest[i]}), Phase::kHandshake);
  }
  for (int i = 0; i < 3; ++i) {
    const auto peer = party_from_index(i);
    if (peer == self) continue;
    const auto m = endpoint.recv(peer, 1, 64, Phase::kHandshake);
    if (m.words[0] != digest[i]) {
      throw HandshakeError("session digest mismatch with " + to_string(peer) +
                           " (ring, job or keys differ)");
    }
  }
}

SimResult run_local_sim(const RingParams& params, std::uint64_t key_seed, const Job& job,
                        Party::Options options,
                        std::function<void(const SendEvent&)> observer) {
  std::array<std::array<std::unique_ptr<Link>, 3>, 3> links;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      auto [ab, ba] = make_memory_link_pair();
      links[a][b] = std::move(ab);
      links[b][a] = std::move(ba);
    }
  }
  std::array<std::unique_ptr<Endpoint>, 3> endpoints;
  for (int i = 0; i < 3; ++i) {
    endpoints[i] = std::make_unique<Endpoint>(party_from_index(i), std::move(links[i]));
  }

  const auto k0 = PrfKey::derive(key_seed, KeyPair::kP0P2);
  const auto k1 = PrfKey::derive(key_seed, KeyPair::kP1P2);

  std::array<std::exception_ptr, 3> errors;
  std::mutex observer_mu;
  auto body = [&](int i) {
    try {
      const auto id = party_from_index(i);
      Party p(id, *endpoints[i], params, id == PartyId::kP1 ? std::nullopt : std::optional(k0),
              id == PartyId::kP0 ? std::nullopt : std::optional(k1), options);
      run_job(p, job);
    } catch (...) {
      errors[i] = std::current_exception();
      endpoints[i]->close();
    }
  };
  if (observer) {
    // Serialize observer callbacks across the party threads.
    auto guarded = [&observer_mu, observer](const SendEvent& e) {
      std::lock_guard lock(observer_mu);
      observer(e);
    };
    for (auto& ep : endpoints) ep->set_observer(guarded);
  }
  {
    std::array<std::thread, 3> threads;
    for (int i = 0; i < 3; ++i) threads[i] = std::thread(body, i);
    for (auto& t : threads) t.join();
  }

  std::exception_ptr first;
  for (const auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const DisconnectError&) {
      if (!first) first = e;
      continue;
    } catch (...) {
    }
    std::rethrow_exception(e);
  }
  if (first) std::rethrow_exception(first);

  SimResult r;
  for (int i = 0; i < 3; ++i) r.per_party[i] = endpoints[i]->stats();
  r.merged = CommStats::merge(r.per_party);
  return r;
}

}  // namespace bmpc
