#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bmpc/randomness.hpp"
#include "bmpc/ring.hpp"
#include "bmpc/sharing.hpp"
#include "bmpc/transport.hpp"

namespace bmpc {

// A job is executed in up to three stages:
//   kDealer      P2 walks the schedule and sends every correlation offline;
//   kPreprocess  P1 walks the same schedule and stores what P2 sent;
//   kOnline      P0 and P1 run the protocol for real.
// Control flow of a job must depend on shapes only, never on values.
enum class Stage { kDealer, kPreprocess, kOnline };

// Material P1 received from the dealer for one protocol invocation.
struct CorrelationRecord {
  std::uint64_t tag = 0;
  std::vector<FixedTensor> tensors;
};

class Party {
 public:
  struct Options {
    // Skip all arithmetic and move zero-filled payloads. Byte and round
    // counts are unchanged; values are meaningless.
    bool accounting_only = false;
  };

  Party(PartyId id, Endpoint& endpoint, const RingParams& params, std::optional<PrfKey> key0,
        std::optional<PrfKey> key1, Options options);

  PartyId id() const { return id_; }
  int index() const { return index_of(id_); }
  bool is_dealer() const { return id_ == PartyId::kP2; }
  Stage stage() const { return stage_; }
  bool online() const { return stage_ == Stage::kOnline; }
  // True when shares carry real data and arithmetic must be done.
  bool computing() const { return stage_ == Stage::kOnline && !options_.accounting_only; }
  bool accounting_only() const { return options_.accounting_only; }
  const RingParams& params() const { return params_; }
  Endpoint& endpoint() { return endpoint_; }

  void begin_stage(Stage stage);
  std::uint64_t next_invocation(std::string_view protocol);

  const PrfKey& key(KeyPair pair) const;
  bool holds(KeyPair pair) const;
  // Key pair shared by this compute party with the dealer.
  KeyPair own_pair() const { return id_ == PartyId::kP0 ? KeyPair::kP0P2 : KeyPair::kP1P2; }
  PrfStream stream(KeyPair pair, std::uint64_t stream_id) const;

  void push_record(CorrelationRecord record);
  CorrelationRecord pop_record(std::uint64_t expected_tag);
  std::size_t pending_records() const { return records_.size(); }

  // This party's share when online, a zero placeholder otherwise.
  FixedTensor input(const SharePair& shares) const;
  // Records an online share into slot[index()] for later reconstruction.
  void keep(std::array<FixedTensor, 2>& slot, const FixedTensor& share) const;

 private:
  PartyId id_;
  Endpoint& endpoint_;
  RingParams params_;
  std::optional<PrfKey> key0_;
  std::optional<PrfKey> key1_;
  Options options_;
  Stage stage_ = Stage::kOnline;
  std::map<std::string, std::uint64_t, std::less<>> invocations_;
  std::deque<CorrelationRecord> records_;
};

using Job = std::function<void(Party&)>;

// Drives one party through the stages that apply to it.
void run_job(Party& party, const Job& job);

// Sends digest[j] to every peer j and expects the same value back, failing
// with HandshakeError on any mismatch. Per-peer digests let each pair also
// compare the fingerprint of the key only they share.
void handshake(Endpoint& endpoint, const std::array<std::uint64_t, 3>& digest);

struct SimResult {
  std::array<CommStats, 3> per_party;
  CommStats merged;
};

// Runs all three parties on threads over in-memory links. Keys are derived
// from key_seed. The first real failure is rethrown after all threads join.
SimResult run_local_sim(const RingParams& params, std::uint64_t key_seed, const Job& job,
                        Party::Options options = {},
                        std::function<void(const SendEvent&)> observer = nullptr);

}  // namespace bmpc
