#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "bmpc/ring.hpp"

namespace bmpc {

// Which pair of parties shares a key: P0 with the dealer, or P1 with the dealer.
enum class KeyPair : std::uint8_t { kP0P2 = 0, kP1P2 = 1 };

// PRF key. Raw key bytes (16 to 32) are normalized to a 256-bit ChaCha20 key
// with BLAKE2b-256, so keys of any accepted length give a full-width key.
class PrfKey {
 public:
  PrfKey(std::span<const std::uint8_t> key_bytes, KeyPair pair);

  static PrfKey from_hex(std::string_view hex, KeyPair pair);
  // Test/demo convenience: key for `pair` derived from a 64-bit seed.
  static PrfKey derive(std::uint64_t seed, KeyPair pair);

  KeyPair pair() const { return pair_; }
  const std::array<std::uint8_t, 32>& material() const { return material_; }
  // Short digest used in the session handshake to detect key mismatch.
  std::uint64_t fingerprint() const;

 private:
  std::array<std::uint8_t, 32> material_{};
  KeyPair pair_;
};

// Counter-mode keyed word stream. Word i of stream (key, id) is bytes
// [8i, 8i+8) (little endian) of the original ChaCha20 keystream with nonce
// = id and the 64-bit block counter starting at zero. This mapping is pinned
// by test vectors and must not change.
class PrfStream {
 public:
  PrfStream(const PrfKey& key, std::uint64_t stream_id, std::uint64_t counter = 0);

  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_word();
  void fill(std::span<std::uint64_t> out);

  // Uniform words in [0, 2^modulus_bits); advances the counter by numel(shape).
  FixedTensor next_tensor(const Shape& shape, const RingParams& params,
                          unsigned modulus_bits, int scale = 0);

 private:
  std::array<std::uint8_t, 32> key_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
};

// Stream labels are a pure function of (protocol, invocation index, tensor role)
// so that every holder of a key derives the same schedule.
std::uint64_t derive_stream_id(std::string_view protocol, std::uint64_t invocation,
                               std::string_view role);

}  // namespace bmpc
