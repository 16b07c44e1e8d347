#pragma once

#include <array>
#include <random>
#include <vector>

#include "bmpc/party.hpp"
#include "bmpc/ring.hpp"
#include "bmpc/sharing.hpp"

namespace testing_support {

inline bmpc::FixedTensor random_tensor(const bmpc::Shape& shape, std::mt19937_64& rng,
                                       const bmpc::RingParams& p, int scale = 0) {
  bmpc::FixedTensor t(shape, scale);
  for (auto& w : t.words()) w = bmpc::reduce(rng(), p);
  return t;
}

inline bmpc::FixedTensor encode_vec(const std::vector<double>& v, const bmpc::Shape& shape,
                                    const bmpc::RingParams& p, int scale) {
  return bmpc::encode(std::span<const double>(v), shape, p, scale);
}

// Collects both compute parties' online shares of one value.
struct Slot {
  std::array<bmpc::FixedTensor, 2> shares;
  bmpc::FixedTensor open(const bmpc::RingParams& p) const {
    return bmpc::reconstruct(shares[0], shares[1], p);
  }
};

}  // namespace testing_support
