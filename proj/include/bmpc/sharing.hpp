#pragma once

#include <cstdint>
#include <random>
#include <utility>

#include "bmpc/ring.hpp"

namespace bmpc {

class Party;

struct AdditiveShare {
  FixedTensor tensor;
  int party = 0;
};

using SharePair = std::pair<AdditiveShare, AdditiveShare>;

// share0 is uniform from rng; share1 = secret - share0.
SharePair share(const FixedTensor& secret, std::mt19937_64& rng, const RingParams& p);
FixedTensor reconstruct(const AdditiveShare& s0, const AdditiveShare& s1, const RingParams& p);
FixedTensor reconstruct(const FixedTensor& s0, const FixedTensor& s1, const RingParams& p);

// Both compute parties learn the secret; one online round, 2 * size words.
FixedTensor open(Party& party, const FixedTensor& share);

// Adds a public tensor to the shared value (only P0 touches its share).
FixedTensor add_public(Party& party, const FixedTensor& share, const FixedTensor& pub);

// Local truncation by d bits; scale drops by d.
FixedTensor truncate(Party& party, const FixedTensor& share, unsigned d);

// Multiplies by a public real c encoded with frac_bits fractional bits and
// truncates those bits away again, so the scale is unchanged.
FixedTensor scale_by_public_fixed(Party& party, const FixedTensor& share, double c,
                                  unsigned frac_bits);

}  // namespace bmpc
