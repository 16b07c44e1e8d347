#include "bmpc/nonlinear.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "bmpc/error.hpp"
#include "bmpc/sharing.hpp"

namespace bmpc {

namespace {

Word low_mask(unsigned bits) { return bits >= 64 ? ~Word{0} : (Word{1} << bits) - 1; }

PartyId peer_of(const Party& party) {
  return party.index() == 0 ? PartyId::kP1 : PartyId::kP0;
}

// Public factor times a share word, both as ring words.
inline Word mul(Word a, Word b, const RingParams& p) { return reduce(a * b, p); }

}  // namespace

double masked_angle(Word delta, int k, unsigned bits) {
  const Word t = (static_cast<Word>(k) * delta) & low_mask(bits);
  return 2.0 * std::numbers::pi * std::ldexp(static_cast<double>(t), -static_cast<int>(bits));
}

SinCorrelation sin_open(Party& party, const FixedTensor& x, std::span<const int> k, unsigned m) {
  const auto& p = party.params();
  const unsigned bits = m + p.f;
  if (bits >= p.n) throw ConfigError("sine period exponent too large: m + f must be below n");
  if (k.empty()) throw ShapeError("sin_open: no frequencies");
  if (x.scale() != static_cast<int>(p.f)) throw ShapeError("sin_open: input must be at scale f");

  const std::size_t N = x.size(), L = k.size();
  const auto inv = party.next_invocation("sin");
  const auto sid_x = derive_stream_id("sin", inv, "x");
  const auto sid_u = derive_stream_id("sin", inv, "u");
  const auto sid_v = derive_stream_id("sin", inv, "v");
  const Shape uv_shape{L, N};
  const int f = static_cast<int>(p.f);

  SinCorrelation corr;
  corr.delta.assign(N, 0);
  auto placeholders = [&] {
    corr.sin_share.assign(L, FixedTensor(x.shape(), f));
    corr.cos_share.assign(L, FixedTensor(x.shape(), f));
  };

  if (party.stage() == Stage::kDealer) {
    Message mu, mv;
    if (party.accounting_only()) {
      mu = Message::zero_filled(sid_u, p.n, L * N);
      mv = Message::zero_filled(sid_v, p.n, L * N);
    } else {
      const auto xl = party.stream(KeyPair::kP0P2, sid_x).next_tensor(x.shape(), p, bits);
      const auto xr = party.stream(KeyPair::kP1P2, sid_x).next_tensor(x.shape(), p, bits);
      const auto ul = party.stream(KeyPair::kP0P2, sid_u).next_tensor(uv_shape, p, p.n);
      const auto vl = party.stream(KeyPair::kP0P2, sid_v).next_tensor(uv_shape, p, p.n);
      std::vector<Word> ur(L * N), vr(L * N);
      for (std::size_t i = 0; i < N; ++i) {
        const Word mask = (xl[i] + xr[i]) & low_mask(bits);
        for (std::size_t j = 0; j < L; ++j) {
          const double th = masked_angle(mask, k[j], bits);
          ur[j * N + i] = reduce(encode_word(std::sin(th), p, f) - ul[j * N + i], p);
          vr[j * N + i] = reduce(encode_word(std::cos(th), p, f) - vl[j * N + i], p);
        }
      }
      mu = Message::of(sid_u, p.n, std::move(ur));
      mv = Message::of(sid_v, p.n, std::move(vr));
    }
    party.endpoint().send(PartyId::kP1, mu, Phase::kOffline);
    party.endpoint().send(PartyId::kP1, mv, Phase::kOffline);
    placeholders();
    return corr;
  }

  if (party.stage() == Stage::kPreprocess) {
    const bool acc = party.accounting_only();
    auto mu = party.endpoint().recv(PartyId::kP2, L * N, p.n, Phase::kOffline, sid_u, acc);
    auto mv = party.endpoint().recv(PartyId::kP2, L * N, p.n, Phase::kOffline, sid_v, acc);
    CorrelationRecord rec{sid_u, {}};
    if (!acc) {
      rec.tensors.emplace_back(uv_shape, std::move(mu.words), f);
      rec.tensors.emplace_back(uv_shape, std::move(mv.words), f);
    }
    party.push_record(std::move(rec));
    placeholders();
    return corr;
  }

  // Online.
  const bool compute = party.computing();
  FixedTensor u, v;
  if (party.index() == 1) {
    auto rec = party.pop_record(sid_u);
    if (compute) {
      u = std::move(rec.tensors.at(0));
      v = std::move(rec.tensors.at(1));
    }
  } else if (compute) {
    u = party.stream(KeyPair::kP0P2, sid_u).next_tensor(uv_shape, p, p.n, f);
    v = party.stream(KeyPair::kP0P2, sid_v).next_tensor(uv_shape, p, p.n, f);
  }

  std::vector<Message> out;
  std::vector<Word> mine(N, 0);
  if (compute) {
    const auto xm = party.stream(party.own_pair(), sid_x).next_tensor(x.shape(), p, bits);
    for (std::size_t i = 0; i < N; ++i) mine[i] = (x[i] - xm[i]) & low_mask(bits);
    out.push_back(Message::of(sid_x, bits, mine));
  } else {
    out.push_back(Message::zero_filled(sid_x, bits, N));
  }
  auto in = party.endpoint().exchange(peer_of(party), out);
  if (!compute) {
    placeholders();
    return corr;
  }
  for (std::size_t i = 0; i < N; ++i) corr.delta[i] = (mine[i] + in[0].words[i]) & low_mask(bits);
  for (std::size_t j = 0; j < L; ++j) {
    FixedTensor us(x.shape(), f), vs(x.shape(), f);
    std::copy_n(u.words().begin() + j * N, N, us.words().begin());
    std::copy_n(v.words().begin() + j * N, N, vs.words().begin());
    corr.sin_share.push_back(std::move(us));
    corr.cos_share.push_back(std::move(vs));
  }
  return corr;
}

std::vector<FixedTensor> sin_protocol(Party& party, const FixedTensor& x, std::span<const int> k,
                                      unsigned m) {
  const auto& p = party.params();
  const auto corr = sin_open(party, x, k, m);
  const int f = static_cast<int>(p.f);
  const unsigned bits = m + p.f;
  std::vector<FixedTensor> w;
  for (std::size_t j = 0; j < k.size(); ++j) {
    FixedTensor out(x.shape(), 2 * f);
    if (party.computing()) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double th = masked_angle(corr.delta[i], k[j], bits);
        // sin(A + B) = sin A cos B + cos A sin B
        out[i] = reduce(mul(encode_word(std::sin(th), p, f), corr.cos_share[j][i], p) +
                            mul(encode_word(std::cos(th), p, f), corr.sin_share[j][i], p),
                        p);
      }
    }
    w.push_back(std::move(out));
  }
  return w;
}

std::uint64_t sin_closed_form_bits(std::size_t elements, std::size_t frequencies, unsigned m,
                                   Phase phase, const RingParams& p) {
  switch (phase) {
    case Phase::kOffline: return 2ull * frequencies * elements * p.n;
    case Phase::kOnline: return 2ull * (m + p.f) * elements;
    default: return 0;
  }
}

// ---------------------------------------------------------------- sigmoid

double fourier_sigmoid_real(double x) {
  double s = kFourierSigmoid[0];
  for (int j = 1; j <= 5; ++j) {
    s += kFourierSigmoid[j] * std::sin(2.0 * std::numbers::pi * j * x / 32.0);
  }
  return s;
}

double fourier_sigmoid_derivative_real(double x) {
  double s = 0.0;
  for (int j = 1; j <= 5; ++j) {
    const double w = 2.0 * std::numbers::pi * j / 32.0;
    s += kFourierSigmoid[j] * w * std::cos(w * x);
  }
  return s;
}

double chebyshev_sigmoid_real(double x) {
  const auto& a = kChebyshevSigmoid;
  const double x2 = x * x;
  return a[0] + x * (a[1] + x2 * (a[2] + x2 * (a[3] + x2 * (a[4] + x2 * a[5]))));
}

SigmoidOutput sigmoid_fourier(Party& party, const FixedTensor& x, bool with_derivative) {
  static constexpr int kFreq[] = {1, 2, 3, 4, 5};
  const auto& p = party.params();
  const int f = static_cast<int>(p.f);
  const unsigned bits = kFourierPeriodBits + p.f;
  const auto corr = sin_open(party, x, kFreq, kFourierPeriodBits);

  FixedTensor value(x.shape(), 2 * f);
  FixedTensor deriv(x.shape(), 2 * f);
  if (party.computing()) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      Word acc = 0, dacc = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double th = masked_angle(corr.delta[i], kFreq[j], bits);
        const double a = kFourierSigmoid[j + 1];
        const Word u = corr.sin_share[j][i], v = corr.cos_share[j][i];
        acc += mul(encode_word(a * std::sin(th), p, f), v, p) +
               mul(encode_word(a * std::cos(th), p, f), u, p);
        if (with_derivative) {
          const double aw = a * 2.0 * std::numbers::pi * kFreq[j] / 32.0;
          // cos(A + B) = cos A cos B - sin A sin B
          dacc += mul(encode_word(aw * std::cos(th), p, f), v, p) -
                  mul(encode_word(aw * std::sin(th), p, f), u, p);
        }
      }
      if (party.index() == 0) acc += encode_word(kFourierSigmoid[0], p, 2 * f);
      value[i] = reduce(acc, p);
      deriv[i] = reduce(dacc, p);
    }
  }
  SigmoidOutput out;
  out.value = truncate(party, value, p.f);
  if (with_derivative) out.derivative = truncate(party, deriv, p.f);
  return out;
}

FixedTensor sigmoid_chebyshev(Party& party, const FixedTensor& x) {
  const auto& p = party.params();
  const int f = static_cast<int>(p.f);
  if (x.scale() != f) throw ShapeError("sigmoid_chebyshev: input must be at scale f");
  const auto spec = BilinearSpec::elementwise(x.shape());

  // Work on y = x / 8 so the odd powers stay small on the valid range.
  auto y = truncate(party, x, 3);
  y.set_scale(f);
  auto prod = [&](const FixedTensor& a, const FixedTensor& b) {
    return truncate(party, bm_multiply(party, spec, a, b).c, p.f);
  };
  const auto p2 = prod(y, y);
  const auto p3 = prod(p2, y);
  const auto p5 = prod(p3, p2);
  const auto p7 = prod(p5, p2);
  const auto p9 = prod(p7, p2);

  const auto& a = kChebyshevSigmoid;
  const FixedTensor* terms[] = {&y, &p3, &p5, &p7, &p9};
  FixedTensor acc(x.shape(), 2 * f);
  if (party.computing()) {
    for (int t = 0; t < 5; ++t) {
      const int power = 2 * t + 1;
      const Word c = encode_word(a[t + 1] * std::pow(8.0, power), p, f);
      for (std::size_t i = 0; i < x.size(); ++i) acc[i] += mul(c, (*terms[t])[i], p);
    }
    if (party.index() == 0) {
      const Word a0 = encode_word(a[0], p, 2 * f);
      for (auto& w : acc.words()) w += a0;
    }
    for (auto& w : acc.words()) w = reduce(w, p);
  }
  return truncate(party, acc, p.f);
}

// ---------------------------------------------------------------- softmax

namespace {

unsigned log2_steps(unsigned steps) {
  if (steps == 0 || !std::has_single_bit(steps)) {
    throw ConfigError("Euler steps must be a power of two, got " + std::to_string(steps));
  }
  return static_cast<unsigned>(std::countr_zero(steps));
}

}  // namespace

FixedTensor softmax_protocol(Party& party, const FixedTensor& x, const SoftmaxOptions& options) {
  const auto& p = party.params();
  const int f = static_cast<int>(p.f);
  const unsigned lk = log2_steps(options.steps);
  if (x.shape().size() != 2) throw ShapeError("softmax_protocol: input must be (rows, classes)");
  if (x.scale() != f) throw ShapeError("softmax_protocol: input must be at scale f");
  const std::size_t R = x.shape()[0], L = x.shape()[1];

  FixedTensor y0(x.shape(), f);
  for (auto& w : y0.words()) w = encode_word(1.0 / static_cast<double>(L), p, f);
  FixedTensor y = add_public(party, FixedTensor(x.shape(), f), y0);

  const auto ew = BilinearSpec::elementwise(x.shape());
  const auto sv = BilinearSpec::scalar_vec(R, L);
  MaskHandle x_mask;
  for (unsigned t = 1; t <= options.steps; ++t) {
    auto r1 = bm_multiply(party, ew, x, y, t > 1 ? &x_mask : nullptr);
    if (t == 1) x_mask = r1.mask_a;
    const FixedTensor& z = r1.c;  // scale 2f

    FixedTensor zsum({R}, 2 * f);
    for (std::size_t i = 0; i < R; ++i) {
      Word s = 0;
      for (std::size_t j = 0; j < L; ++j) s += z[i * L + j];
      zsum[i] = reduce(s, p);
    }
    const auto s = truncate(party, zsum, p.f);

    auto r2 = bm_multiply(party, sv, s, y, nullptr, &r1.mask_b);
    auto step = truncate(party, sub(z, r2.c, p), p.f + lk);
    step.set_scale(f);
    y = add(y, step, p);
    if (options.on_iteration) options.on_iteration(t, y);
  }
  return y;
}

std::uint64_t softmax_step_bits(std::size_t rows, std::size_t classes, const RingParams& p) {
  return 2ull * (classes + 1) * p.n * rows;
}

std::uint64_t softmax_one_time_bits(std::size_t rows, std::size_t classes, const RingParams& p) {
  return 2ull * classes * p.n * rows;
}

std::uint64_t softmax_rounds(unsigned steps) { return 2ull * steps; }

Word round_shift(Word w, unsigned d, const RingParams& p) {
  if (d == 0) return w;
  const std::int64_t v = to_signed(w, p);
  return from_signed((v + (std::int64_t{1} << (d - 1))) >> d, p);
}

std::vector<Word> softmax_fixed_sim(std::span<const Word> x, std::size_t rows,
                                    std::size_t classes, unsigned steps, const RingParams& p) {
  const unsigned lk = log2_steps(steps);
  const int f = static_cast<int>(p.f);
  if (x.size() != rows * classes) throw ShapeError("softmax_fixed_sim: size mismatch");
  std::vector<Word> y(x.size(), encode_word(1.0 / static_cast<double>(classes), p, f));
  std::vector<Word> z(classes);
  for (std::size_t r = 0; r < rows; ++r) {
    Word* yr = y.data() + r * classes;
    const Word* xr = x.data() + r * classes;
    for (unsigned t = 0; t < steps; ++t) {
      Word zs = 0;
      for (std::size_t j = 0; j < classes; ++j) {
        z[j] = reduce(xr[j] * yr[j], p);
        zs += z[j];
      }
      const Word s = round_shift(reduce(zs, p), p.f, p);
      for (std::size_t j = 0; j < classes; ++j) {
        yr[j] = reduce(yr[j] + round_shift(reduce(z[j] - s * yr[j], p), p.f + lk, p), p);
      }
    }
  }
  return y;
}

}  // namespace bmpc
