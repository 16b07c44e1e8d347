#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "bmpc/party.hpp"
#include "bmpc/socket_link.hpp"
#include "json.hpp"

namespace bmpc {

inline constexpr const char* kProtocolVersion = "bmpc/1";

struct JobConfig {
  std::string kind = "lr";        // lr | cnn-toy
  std::string data = "synthetic";  // "synthetic" or a CSV path
  std::size_t rows = 2000;        // synthetic only
  std::size_t features = 10;      // synthetic only
  std::size_t iterations = 10;
  std::size_t batch = 128;
  double lr = 0.01;
  std::uint64_t seed = 1;         // data owner seed: data, shares, init, order

  nlohmann::json to_json() const;
};

struct SessionConfig {
  PartyId party = PartyId::kP0;
  std::string mode = "sockets";  // sockets | local-sim
  std::array<PeerAddress, 3> peers;
  RingParams ring;
  std::optional<std::string> prf0_hex, prf1_hex;
  std::optional<std::uint64_t> key_seed;
  JobConfig job;
  std::string out;
  std::uint64_t timeout_ms = 60000;

  // Keys this party is entitled to.
  std::optional<PrfKey> key0() const;
  std::optional<PrfKey> key1() const;
};

// Throws ConfigError with a field-specific message.
SessionConfig parse_session_config(const nlohmann::json& j);
SessionConfig load_session_config(const std::filesystem::path& path);
JobConfig parse_job_config(const nlohmann::json& j);

// Handshake digests for this party's three links.
std::array<std::uint64_t, 3> session_digests(const SessionConfig& cfg);

// A training job plus the place its results land.
struct TrainingJob {
  Job job;
  // Slot i is written by compute party i once it finishes online.
  std::shared_ptr<std::array<nlohmann::json, 2>> metrics;
};

// Inputs are shared deterministically from job.seed: every party derives the
// same share pair locally and keeps its own half. This stands in for a data
// owner sending shares and is not private.
TrainingJob make_training_job(const JobConfig& job, const RingParams& ring);

// Sockets mode, one party. Returns the report written to cfg.out.
nlohmann::json run_party_sockets(const SessionConfig& cfg);

// All three parties in-process.
nlohmann::json run_training_local(const JobConfig& job, const RingParams& ring,
                                  std::uint64_t key_seed);

}  // namespace bmpc
