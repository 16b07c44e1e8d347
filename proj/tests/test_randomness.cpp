#include <gtest/gtest.h>
#include <sodium.h>

#include <array>
#include <boost/math/distributions/chi_squared.hpp>
#include <set>

#include "bmpc/error.hpp"
#include "bmpc/randomness.hpp"

using namespace bmpc;

TEST(Prf, ChaCha20KnownAnswer) {
  ASSERT_GE(sodium_init(), 0);
  std::array<std::uint8_t, 32> key{};
  std::array<std::uint8_t, 8> nonce{};
  std::array<std::uint8_t, 8> out{};
  crypto_stream_chacha20(out.data(), out.size(), nonce.data(), key.data());
  const std::array<std::uint8_t, 8> expect = {0x76, 0xb8, 0xe0, 0xad, 0xa0, 0xf1, 0x3d, 0x90};
  EXPECT_EQ(out, expect);
}

// Vectors frozen from an independent Python implementation (hashlib BLAKE2b
// plus the cryptography package's ChaCha20 with a 64-bit counter prefix).
TEST(Prf, PinnedStreamIds) {
  EXPECT_EQ(derive_stream_id("bm", 0, "a"), 0xa1d0151764a8aebcULL);
  EXPECT_EQ(derive_stream_id("open", 3, "x"), 0x00f6a7173bc11037ULL);
}

TEST(Prf, PinnedWords) {
  const auto k = PrfKey::derive(7, KeyPair::kP0P2);
  PrfStream s(k, derive_stream_id("bm", 0, "a"));
  EXPECT_EQ(s.next_word(), 0x52be715e31c40858ULL);
  EXPECT_EQ(s.next_word(), 0x312f330d3fe921b8ULL);
  EXPECT_EQ(s.next_word(), 0xc56289d4b31fd79fULL);
  EXPECT_EQ(s.next_word(), 0xaa77ddb3de029940ULL);

  // Starting mid-block must agree with the continuous stream.
  PrfStream mid(k, derive_stream_id("bm", 0, "a"), 13);
  std::array<std::uint64_t, 3> w{};
  mid.fill(w);
  EXPECT_EQ(w[0], 0x13b39e82fac23ae8ULL);
  EXPECT_EQ(w[1], 0xf37ca723e9cbd9c6ULL);
  EXPECT_EQ(w[2], 0xdc7aaef93721b628ULL);
  EXPECT_EQ(mid.counter(), 16u);

  PrfStream other(PrfKey::derive(7, KeyPair::kP1P2), 42);
  EXPECT_EQ(other.next_word(), 0xf1290644955eb1d5ULL);

  PrfStream hex(PrfKey::from_hex("000102030405060708090a0b0c0d0e0f", KeyPair::kP0P2), 0);
  EXPECT_EQ(hex.next_word(), 0x6f76cf1dad200e83ULL);
}

TEST(Prf, KeyValidation) {
  EXPECT_THROW(PrfKey::from_hex("0011", KeyPair::kP0P2), ConfigError);
  EXPECT_THROW(PrfKey::from_hex("0g", KeyPair::kP0P2), ConfigError);
  EXPECT_THROW(PrfKey::from_hex("001", KeyPair::kP0P2), ConfigError);
}

TEST(Prf, Deterministic) {
  const RingParams p{64, 14};
  const auto k = PrfKey::derive(11, KeyPair::kP0P2);
  PrfStream a(k, 99), b(k, 99);
  EXPECT_EQ(a.next_tensor({37}, p, 64), b.next_tensor({37}, p, 64));
  EXPECT_EQ(a.counter(), 37u);
}

TEST(Prf, DistinctStreamsDiffer) {
  const auto k = PrfKey::derive(12, KeyPair::kP0P2);
  std::set<std::uint64_t> seen;
  for (std::uint64_t id = 0; id < 1000; ++id) {
    PrfStream s(k, derive_stream_id("bm", id, "a"));
    seen.insert(s.next_word());
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Prf, ModulusRange) {
  const RingParams p{64, 14};
  PrfStream s(PrfKey::derive(13, KeyPair::kP1P2), 5);
  const auto t = s.next_tensor({1000}, p, 19);
  Word seen_bits = 0;
  for (Word w : t.words()) {
    EXPECT_LT(w, Word{1} << 19);
    seen_bits |= w;
  }
  EXPECT_EQ(seen_bits, (Word{1} << 19) - 1);
  EXPECT_THROW(s.next_tensor({1}, p, 65), ShapeError);
}

TEST(Prf, LowByteUniformity) {
  PrfStream s(PrfKey::derive(14, KeyPair::kP0P2), 6);
  std::array<double, 256> counts{};
  const std::size_t N = 256 * 200;
  for (std::size_t i = 0; i < N; ++i) counts[s.next_word() & 0xff] += 1;
  double chi = 0;
  const double e = static_cast<double>(N) / 256.0;
  for (double c : counts) chi += (c - e) * (c - e) / e;
  const boost::math::chi_squared dist(255);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi)), 0.001);
}

TEST(Prf, FingerprintTracksKey) {
  const auto a = PrfKey::derive(1, KeyPair::kP0P2);
  const auto b = PrfKey::derive(2, KeyPair::kP0P2);
  EXPECT_EQ(a.fingerprint(), PrfKey::derive(1, KeyPair::kP0P2).fingerprint());
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}
