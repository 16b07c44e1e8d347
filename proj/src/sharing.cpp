#include "bmpc/sharing.hpp"

#include "bmpc/error.hpp"
#include "bmpc/party.hpp"

namespace bmpc {

SharePair share(const FixedTensor& secret, std::mt19937_64& rng, const RingParams& p) {
  FixedTensor s0(secret.shape(), secret.scale());
  for (auto& w : s0.words()) w = reduce(rng(), p);
  FixedTensor s1 = sub(secret, s0, p);
  return {AdditiveShare{std::move(s0), 0}, AdditiveShare{std::move(s1), 1}};
}

FixedTensor reconstruct(const FixedTensor& s0, const FixedTensor& s1, const RingParams& p) {
  return add(s0, s1, p);
}

FixedTensor reconstruct(const AdditiveShare& s0, const AdditiveShare& s1, const RingParams& p) {
  if (s0.party == s1.party) throw ShapeError("reconstruct needs one share from each party");
  return add(s0.tensor, s1.tensor, p);
}

FixedTensor open(Party& party, const FixedTensor& x) {
  if (party.is_dealer() || !party.online()) return FixedTensor(x.shape(), x.scale());
  const auto& p = party.params();
  const auto peer = party.index() == 0 ? PartyId::kP1 : PartyId::kP0;
  const auto tag = derive_stream_id("open", party.next_invocation("open"), "x");
  std::vector<Message> out;
  if (party.accounting_only()) {
    out.push_back(Message::zero_filled(tag, p.n, x.size()));
  } else {
    out.push_back(Message::of(tag, p.n, {x.words().begin(), x.words().end()}));
  }
  auto in = party.endpoint().exchange(peer, out);
  if (party.accounting_only()) return FixedTensor(x.shape(), x.scale());
  FixedTensor other(x.shape(), std::move(in[0].words), x.scale());
  return add(x, other, p);
}

FixedTensor add_public(Party& party, const FixedTensor& x, const FixedTensor& pub) {
  if (pub.shape() != x.shape() || pub.scale() != x.scale()) {
    throw ShapeError("add_public: operand shape or scale mismatch");
  }
  if (party.index() != 0 || !party.computing()) return x;
  return add(x, pub, party.params());
}

FixedTensor truncate(Party& party, const FixedTensor& x, unsigned d) {
  if (!party.computing() || party.is_dealer()) {
    FixedTensor out(x.shape(), x.scale() - static_cast<int>(d));
    return out;
  }
  return truncate_local_share(x, d, party.index(), party.params());
}

FixedTensor scale_by_public_fixed(Party& party, const FixedTensor& x, double c,
                                  unsigned frac_bits) {
  const auto& p = party.params();
  const auto k = to_signed(encode_word(c, p, static_cast<int>(frac_bits)), p);
  FixedTensor out = x;
  if (party.computing() && !party.is_dealer()) out = scale_by_public_int(x, k, p);
  out = truncate(party, out, frac_bits);
  out.set_scale(x.scale());
  return out;
}

}  // namespace bmpc
