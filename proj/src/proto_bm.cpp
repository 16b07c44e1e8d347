#include "bmpc/proto_bm.hpp"

#include "bmpc/error.hpp"

namespace bmpc {

class BmEngine {
 public:
  static std::vector<BmOutput> run(Party& party, const std::vector<BmRequest>& requests);
};

namespace {

struct Plan {
  std::uint64_t sid_a = 0, sid_b = 0, sid_c = 0;
  int scale_a = 0, scale_b = 0;
};

void check_request(const Party& party, const BmRequest& r) {
  const auto& s = r.spec;
  if (party.computing() && (!r.a || !r.b)) throw ShapeError("bm_multiply: missing operand");
  if (r.a && r.a->shape() != s.shape_a()) {
    throw ShapeError(s.describe() + ": operand a has shape " + shape_str(r.a->shape()));
  }
  if (r.b && r.b->shape() != s.shape_b()) {
    throw ShapeError(s.describe() + ": operand b has shape " + shape_str(r.b->shape()));
  }
  for (const auto* h : {r.reuse_a, r.reuse_b}) {
    if (h && !h->valid()) throw ProtocolError("bm_multiply: reused mask handle is empty");
  }
  if (r.reuse_a && r.reuse_a->shape() != s.shape_a()) {
    throw ProtocolError("bm_multiply: reused mask for a has the wrong shape");
  }
  if (r.reuse_b && r.reuse_b->shape() != s.shape_b()) {
    throw ProtocolError("bm_multiply: reused mask for b has the wrong shape");
  }
}

FixedTensor mask_share(const Party& party, KeyPair pair, std::uint64_t sid, const Shape& shape,
                       int scale) {
  const auto& p = party.params();
  return party.stream(pair, sid).next_tensor(shape, p, p.n, scale);
}

}  // namespace

std::vector<BmOutput> BmEngine::run(Party& party, const std::vector<BmRequest>& requests) {
  const auto& p = party.params();
  std::vector<Plan> plans(requests.size());
  std::vector<BmOutput> outs(requests.size());

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    check_request(party, r);
    const auto inv = party.next_invocation("bm");
    auto& pl = plans[i];
    pl.sid_a = r.reuse_a ? r.reuse_a->stream_id() : derive_stream_id("bm", inv, "a");
    pl.sid_b = r.reuse_b ? r.reuse_b->stream_id() : derive_stream_id("bm", inv, "b");
    pl.sid_c = derive_stream_id("bm", inv, "c");
    pl.scale_a = r.a ? r.a->scale() : 0;
    pl.scale_b = r.b ? r.b->scale() : 0;

    auto& o = outs[i];
    o.c = FixedTensor(r.spec.shape_c(), pl.scale_a + pl.scale_b);
    o.mask_a.stream_id_ = pl.sid_a;
    o.mask_a.shape_ = r.spec.shape_a();
    o.mask_a.valid_ = true;
    o.mask_b.stream_id_ = pl.sid_b;
    o.mask_b.shape_ = r.spec.shape_b();
    o.mask_b.valid_ = true;
  }

  if (party.stage() == Stage::kDealer) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& r = requests[i];
      const auto& pl = plans[i];
      Message msg;
      if (party.accounting_only()) {
        msg = Message::zero_filled(pl.sid_c, p.n, r.spec.size_c());
      } else {
        const auto a = add(mask_share(party, KeyPair::kP0P2, pl.sid_a, r.spec.shape_a(), 0),
                           mask_share(party, KeyPair::kP1P2, pl.sid_a, r.spec.shape_a(), 0), p);
        const auto b = add(mask_share(party, KeyPair::kP0P2, pl.sid_b, r.spec.shape_b(), 0),
                           mask_share(party, KeyPair::kP1P2, pl.sid_b, r.spec.shape_b(), 0), p);
        const auto c0 = mask_share(party, KeyPair::kP0P2, pl.sid_c, r.spec.shape_c(), 0);
        const auto c1 = sub(eval(r.spec, a, b, p), c0, p);
        msg = Message::of(pl.sid_c, p.n, {c1.words().begin(), c1.words().end()});
      }
      party.endpoint().send(PartyId::kP1, msg, Phase::kOffline);
    }
    return outs;
  }

  if (party.stage() == Stage::kPreprocess) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& r = requests[i];
      const auto& pl = plans[i];
      auto m = party.endpoint().recv(PartyId::kP2, r.spec.size_c(), p.n, Phase::kOffline,
                                     pl.sid_c, party.accounting_only());
      CorrelationRecord rec{pl.sid_c, {}};
      if (!party.accounting_only()) {
        rec.tensors.emplace_back(r.spec.shape_c(), std::move(m.words), 0);
      }
      party.push_record(std::move(rec));
    }
    return outs;
  }

  // Online.
  const auto own = party.own_pair();
  const auto peer = party.index() == 0 ? PartyId::kP1 : PartyId::kP0;
  const bool compute = party.computing();

  std::vector<FixedTensor> mask_a(requests.size()), mask_b(requests.size());
  std::vector<FixedTensor> c_tilde(requests.size());
  std::vector<FixedTensor> delta_a(requests.size()), delta_b(requests.size());
  std::vector<Message> out;

  auto stale = [](const MaskHandle* h, const FixedTensor* t) {
    return h->snapshot_.words().size() != t->words().size() ||
           !std::equal(t->words().begin(), t->words().end(), h->snapshot_.words().begin());
  };

  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    const auto& pl = plans[i];
    if (party.index() == 1) {
      auto rec = party.pop_record(pl.sid_c);
      if (compute) c_tilde[i] = std::move(rec.tensors.at(0));
    } else if (compute) {
      c_tilde[i] = mask_share(party, own, pl.sid_c, r.spec.shape_c(), 0);
    }

    if (r.reuse_a) {
      if (compute) {
        if (stale(r.reuse_a, r.a)) throw ProtocolError("bm_multiply: stale mask for operand a");
        delta_a[i] = r.reuse_a->opened_;
      }
    } else if (compute) {
      mask_a[i] = mask_share(party, own, pl.sid_a, r.spec.shape_a(), pl.scale_a);
      delta_a[i] = sub(*r.a, mask_a[i], p);
      out.push_back(Message::of(pl.sid_a, p.n, {delta_a[i].words().begin(), delta_a[i].words().end()}));
    } else {
      out.push_back(Message::zero_filled(pl.sid_a, p.n, r.spec.size_a()));
    }

    if (r.reuse_b) {
      if (compute) {
        if (stale(r.reuse_b, r.b)) throw ProtocolError("bm_multiply: stale mask for operand b");
        delta_b[i] = r.reuse_b->opened_;
      }
    } else if (compute) {
      mask_b[i] = mask_share(party, own, pl.sid_b, r.spec.shape_b(), pl.scale_b);
      delta_b[i] = sub(*r.b, mask_b[i], p);
      out.push_back(Message::of(pl.sid_b, p.n, {delta_b[i].words().begin(), delta_b[i].words().end()}));
    } else {
      out.push_back(Message::zero_filled(pl.sid_b, p.n, r.spec.size_b()));
    }
    if (compute) {
      if (r.reuse_a) mask_a[i] = mask_share(party, own, pl.sid_a, r.spec.shape_a(), pl.scale_a);
      if (r.reuse_b) mask_b[i] = mask_share(party, own, pl.sid_b, r.spec.shape_b(), pl.scale_b);
    }
  }

  std::vector<Message> in;
  if (!out.empty()) in = party.endpoint().exchange(peer, out);
  if (!compute) return outs;

  std::size_t next = 0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    auto open_delta = [&](FixedTensor& mine) {
      FixedTensor theirs(mine.shape(), std::move(in[next++].words), mine.scale());
      mine = add(mine, theirs, p);
    };
    if (!r.reuse_a) open_delta(delta_a[i]);
    if (!r.reuse_b) open_delta(delta_b[i]);

    // c_i = f(da, b_i) + f(a~_i, db) + c~_i
    auto c = add(eval(r.spec, delta_a[i], *r.b, p), eval(r.spec, mask_a[i], delta_b[i], p), p);
    c_tilde[i].set_scale(c.scale());
    auto& o = outs[i];
    o.c = add(c, c_tilde[i], p);
    o.mask_a.opened_ = delta_a[i];
    o.mask_a.snapshot_ = *r.a;
    o.mask_b.opened_ = delta_b[i];
    o.mask_b.snapshot_ = *r.b;
  }
  return outs;
}

std::vector<BmOutput> bm_multiply_batch(Party& party, const std::vector<BmRequest>& requests) {
  return BmEngine::run(party, requests);
}

BmOutput bm_multiply(Party& party, const BilinearSpec& spec, const FixedTensor& a,
                     const FixedTensor& b, const MaskHandle* reuse_a, const MaskHandle* reuse_b) {
  auto outs = BmEngine::run(party, {BmRequest{spec, &a, &b, reuse_a, reuse_b}});
  return std::move(outs[0]);
}

std::uint64_t bm_closed_form_bits(const BilinearSpec& spec, Phase phase, const RingParams& p) {
  switch (phase) {
    case Phase::kOffline: return static_cast<std::uint64_t>(spec.size_c()) * p.n;
    case Phase::kOnline: return 2ull * (spec.size_a() + spec.size_b()) * p.n;
    default: return 0;
  }
}

// ---------------------------------------------------------------- im2col

BilinearSpec im2col_matmul_spec(const BilinearSpec& conv_spec) {
  const auto& g = conv_spec.conv();
  const std::size_t out_pos = g.B * g.out_h() * g.out_w();
  const std::size_t crs = g.C * g.r * g.s;
  switch (conv_spec.kind()) {
    case BilinearKind::kConv2dFwd:
      return BilinearSpec::matmul(MatmulDims{out_pos, crs, g.D});
    case BilinearKind::kConv2dBwdInput:
      return BilinearSpec::matmul(MatmulDims{g.B * g.m * g.n, g.r * g.s * g.D, g.C});
    case BilinearKind::kConv2dBwdFilter:
      return BilinearSpec::matmul(MatmulDims{crs, out_pos, g.D, true, false, false});
    default:
      throw ShapeError("im2col baseline needs a conv spec");
  }
}

std::uint64_t im2col_closed_form_bits(const BilinearSpec& conv_spec, Phase phase,
                                      const RingParams& p) {
  return bm_closed_form_bits(im2col_matmul_spec(conv_spec), phase, p);
}

FixedTensor im2col_forward(const ConvShape& g, const FixedTensor& input) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), crs = g.C * g.r * g.s;
  FixedTensor cols({g.B * oh * ow, crs}, input.scale());
  for (std::size_t b = 0; b < g.B; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t row = (b * oh + i) * ow + j;
        for (std::size_t c = 0; c < g.C; ++c)
          for (std::size_t u = 0; u < g.r; ++u)
            for (std::size_t v = 0; v < g.s; ++v) {
              const auto y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                             static_cast<std::ptrdiff_t>(g.pad);
              const auto x = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                             static_cast<std::ptrdiff_t>(g.pad);
              if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(g.m) ||
                  x >= static_cast<std::ptrdiff_t>(g.n)) {
                continue;
              }
              cols[row * crs + (c * g.r + u) * g.s + v] =
                  input[((b * g.m + y) * g.n + x) * g.C + c];
            }
      }
  return cols;
}

FixedTensor im2col_full(const ConvShape& g, const FixedTensor& dz) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), rsd = g.r * g.s * g.D;
  FixedTensor cols({g.B * g.m * g.n, rsd}, dz.scale());
  for (std::size_t b = 0; b < g.B; ++b)
    for (std::size_t y = 0; y < g.m; ++y)
      for (std::size_t x = 0; x < g.n; ++x) {
        const std::size_t row = (b * g.m + y) * g.n + x;
        for (std::size_t u = 0; u < g.r; ++u) {
          // Output row i feeds input row y through tap u when i*stride + u = y + pad.
          const std::size_t yy = y + g.pad;
          if (yy < u || (yy - u) % g.stride != 0) continue;
          const std::size_t i = (yy - u) / g.stride;
          if (i >= oh) continue;
          for (std::size_t v = 0; v < g.s; ++v) {
            const std::size_t xx = x + g.pad;
            if (xx < v || (xx - v) % g.stride != 0) continue;
            const std::size_t j = (xx - v) / g.stride;
            if (j >= ow) continue;
            const Word* src = dz.words().data() + ((b * oh + i) * ow + j) * g.D;
            Word* dst = cols.words().data() + row * rsd + (u * g.s + v) * g.D;
            std::copy(src, src + g.D, dst);
          }
        }
      }
  return cols;
}

FixedTensor filter_to_rsd_c(const ConvShape& g, const FixedTensor& filter) {
  FixedTensor out({g.r * g.s * g.D, g.C}, filter.scale());
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t u = 0; u < g.r; ++u)
      for (std::size_t v = 0; v < g.s; ++v)
        for (std::size_t d = 0; d < g.D; ++d)
          out[((u * g.s + v) * g.D + d) * g.C + c] = filter[((c * g.r + u) * g.s + v) * g.D + d];
  return out;
}

FixedTensor im2col_baseline_multiply(Party& party, const BilinearSpec& conv_spec,
                                     const FixedTensor& a, const FixedTensor& b) {
  const auto mm = im2col_matmul_spec(conv_spec);
  const auto& g = conv_spec.conv();
  const int scale = a.scale() + b.scale();
  if (a.shape() != conv_spec.shape_a() || b.shape() != conv_spec.shape_b()) {
    throw ShapeError(conv_spec.describe() + ": operand shape mismatch");
  }
  if (!party.computing()) {
    // Placeholders never need expanding; only shapes matter here.
    BmEngine::run(party, {BmRequest{mm, nullptr, nullptr}});
    return FixedTensor(conv_spec.shape_c(), scale);
  }
  FixedTensor lhs, rhs;
  switch (conv_spec.kind()) {
    case BilinearKind::kConv2dFwd:
      lhs = im2col_forward(g, a);
      rhs = b.reshaped(mm.shape_b());
      break;
    case BilinearKind::kConv2dBwdInput:
      lhs = im2col_full(g, a);
      rhs = filter_to_rsd_c(g, b);
      break;
    case BilinearKind::kConv2dBwdFilter:
      lhs = im2col_forward(g, b);
      rhs = a.reshaped(mm.shape_b());
      break;
    default:
      throw ShapeError("im2col baseline needs a conv spec");
  }
  auto out = bm_multiply(party, mm, lhs, rhs);
  return out.c.reshaped(conv_spec.shape_c());
}

}  // namespace bmpc
