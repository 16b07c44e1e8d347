#include "bmpc/randomness.hpp"

#include <sodium.h>

#include <cstring>
#include <limits>
#include <mutex>
#include <vector>

#include "bmpc/error.hpp"

namespace bmpc {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("libsodium initialization failed");
  });
}

std::uint64_t load_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void store_le64(std::uint64_t v, std::uint8_t* p) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

constexpr std::size_t kBlockBytes = 64;
constexpr std::size_t kWordsPerBlock = kBlockBytes / 8;

}  // namespace

PrfKey::PrfKey(std::span<const std::uint8_t> key_bytes, KeyPair pair) : pair_(pair) {
  ensure_sodium();
  if (key_bytes.size() < 16 || key_bytes.size() > 32) {
    throw ConfigError("PRF key must be 16 to 32 bytes, got " +
                      std::to_string(key_bytes.size()));
  }
  crypto_generichash(material_.data(), material_.size(), key_bytes.data(),
                     key_bytes.size(), nullptr, 0);
}

PrfKey PrfKey::from_hex(std::string_view hex, KeyPair pair) {
  if (hex.size() % 2 != 0) throw ConfigError("PRF key hex string has odd length");
  std::vector<std::uint8_t> bytes(hex.size() / 2);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ConfigError("PRF key is not valid hex");
    bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return PrfKey(bytes, pair);
}

PrfKey PrfKey::derive(std::uint64_t seed, KeyPair pair) {
  ensure_sodium();
  std::uint8_t in[24] = {'b', 'm', 'p', 'c', '-', 'k', 'e', 'y', 0};
  store_le64(seed, in + 8);
  store_le64(static_cast<std::uint64_t>(pair), in + 16);
  std::array<std::uint8_t, 32> raw{};
  crypto_generichash(raw.data(), raw.size(), in, sizeof(in), nullptr, 0);
  return PrfKey(raw, pair);
}

std::uint64_t PrfKey::fingerprint() const {
  std::uint8_t out[8];
  static constexpr char kLabel[] = "bmpc-key-check";
  crypto_generichash(out, sizeof(out), reinterpret_cast<const std::uint8_t*>(kLabel),
                     sizeof(kLabel) - 1, material_.data(), material_.size());
  return load_le64(out);
}

PrfStream::PrfStream(const PrfKey& key, std::uint64_t stream_id, std::uint64_t counter)
    : key_(key.material()), stream_id_(stream_id), counter_(counter) {
  ensure_sodium();
}

std::uint64_t PrfStream::next_word() {
  std::uint64_t w;
  fill(std::span<std::uint64_t>(&w, 1));
  return w;
}

void PrfStream::fill(std::span<std::uint64_t> out) {
  if (out.empty()) return;
  if (out.size() > std::numeric_limits<std::uint64_t>::max() - counter_) {
    throw ProtocolError("PRF stream counter exhausted");
  }
  std::uint8_t nonce[8];
  store_le64(stream_id_, nonce);

  const std::uint64_t first_block = counter_ / kWordsPerBlock;
  const std::size_t skip = counter_ % kWordsPerBlock;
  const std::size_t total_words = skip + out.size();
  const std::size_t blocks = (total_words + kWordsPerBlock - 1) / kWordsPerBlock;

  // Expand in bounded chunks so huge tensors do not double memory.
  constexpr std::size_t kChunkBlocks = 4096;
  std::vector<std::uint8_t> buf(std::min(blocks, kChunkBlocks) * kBlockBytes);
  std::size_t produced = 0;
  std::size_t skip_left = skip;
  for (std::size_t b = 0; b < blocks; b += kChunkBlocks) {
    const std::size_t nb = std::min(kChunkBlocks, blocks - b);
    const std::size_t nbytes = nb * kBlockBytes;
    std::memset(buf.data(), 0, nbytes);
    crypto_stream_chacha20_xor_ic(buf.data(), buf.data(), nbytes, nonce, first_block + b,
                                  key_.data());
    for (std::size_t w = skip_left; w < nb * kWordsPerBlock && produced < out.size(); ++w) {
      out[produced++] = load_le64(buf.data() + 8 * w);
    }
    skip_left = 0;
  }
  counter_ += out.size();
}

FixedTensor PrfStream::next_tensor(const Shape& shape, const RingParams& params,
                                   unsigned modulus_bits, int scale) {
  if (modulus_bits == 0 || modulus_bits > params.n) {
    throw ShapeError("modulus_bits must be in [1, n]");
  }
  FixedTensor t(shape, scale);
  fill(t.words());
  const Word m = modulus_bits == 64 ? ~Word{0} : ((Word{1} << modulus_bits) - 1);
  for (auto& w : t.words()) w &= m;
  return t;
}

std::uint64_t derive_stream_id(std::string_view protocol, std::uint64_t invocation,
                               std::string_view role) {
  ensure_sodium();
  std::vector<std::uint8_t> in;
  in.reserve(protocol.size() + role.size() + 10);
  in.insert(in.end(), protocol.begin(), protocol.end());
  in.push_back(0);
  std::uint8_t idx[8];
  store_le64(invocation, idx);
  in.insert(in.end(), idx, idx + 8);
  in.insert(in.end(), role.begin(), role.end());
  std::uint8_t out[8];
  crypto_generichash(out, sizeof(out), in.data(), in.size(), nullptr, 0);
  return load_le64(out);
}

}  // namespace bmpc
