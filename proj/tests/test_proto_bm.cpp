#include <gtest/gtest.h>

#include <mutex>
#include <random>

#include "bmpc/error.hpp"
#include "bmpc/proto_bm.hpp"
#include "support.hpp"

using namespace bmpc;
using testing_support::random_tensor;
using testing_support::Slot;

namespace {

const RingParams kP{64, 14};

FixedTensor run_bm(const BilinearSpec& spec, const SharePair& as, const SharePair& bs,
                   SimResult* sim_out = nullptr) {
  Slot c;
  auto sim = run_local_sim(kP, 17, [&](Party& p) {
    const auto a = p.input(as), b = p.input(bs);
    p.keep(c.shares, bm_multiply(p, spec, a, b).c);
  });
  if (sim_out) *sim_out = sim;
  return c.open(kP);
}

}  // namespace

TEST(ProtoBm, ScalarProduct) {
  std::mt19937_64 rng(1);
  const auto spec = BilinearSpec::elementwise({1});
  const auto c = run_bm(spec, share(FixedTensor({1}, {3}, 0), rng, kP),
                        share(FixedTensor({1}, {4}, 0), rng, kP));
  EXPECT_EQ(c[0], 12u);
}

TEST(ProtoBm, EveryKindExact) {
  std::mt19937_64 rng(2);
  ConvShape g{2, 5, 4, 2, 3, 2, 3, 1, 1};
  const std::vector<BilinearSpec> specs = {
      BilinearSpec::elementwise({3, 4}), BilinearSpec::scalar_vec(3, 5),
      BilinearSpec::matmul({4, 3, 2, true, false, true}), BilinearSpec::conv2d_fwd(g),
      BilinearSpec::conv2d_bwd_input(g), BilinearSpec::conv2d_bwd_filter(g)};
  for (const auto& spec : specs) {
    const auto a = random_tensor(spec.shape_a(), rng, kP, 14);
    const auto b = random_tensor(spec.shape_b(), rng, kP, 14);
    SimResult sim;
    const auto c = run_bm(spec, share(a, rng, kP), share(b, rng, kP), &sim);
    EXPECT_EQ(c, eval(spec, a, b, kP)) << spec.describe();
    EXPECT_EQ(c.scale(), 28);
    EXPECT_EQ(sim.merged.total_bits(Phase::kOnline), bm_closed_form_bits(spec, Phase::kOnline, kP));
    EXPECT_EQ(sim.merged.total_bits(Phase::kOffline), bm_closed_form_bits(spec, Phase::kOffline, kP));
    EXPECT_EQ(sim.merged.rounds(Phase::kOnline), 1u);
  }
}

TEST(ProtoBm, ClosedFormExamples) {
  ConvShape g{128, 12, 12, 20, 5, 5, 50};
  const auto fwd = BilinearSpec::conv2d_fwd(g);
  EXPECT_EQ(bm_closed_form_bits(fwd, Phase::kOffline, kP) / 8, 3276800u);
  EXPECT_EQ(bm_closed_form_bits(fwd, Phase::kOnline, kP) / 8, 6298240u);
  const auto bf = BilinearSpec::conv2d_bwd_filter(g);
  EXPECT_EQ(bm_closed_form_bits(bf, Phase::kOnline, kP) / 8, 12451840u);
  EXPECT_EQ(bm_closed_form_bits(bf, Phase::kOffline, kP) / 8, 200000u);
  const auto bi = BilinearSpec::conv2d_bwd_input(g);
  EXPECT_EQ((bm_closed_form_bits(bi, Phase::kOnline, kP) + bm_closed_form_bits(bi, Phase::kOffline, kP)) / 8,
            9902720u);
  const auto one = BilinearSpec::matmul(1, 1, 1);
  EXPECT_EQ(bm_closed_form_bits(one, Phase::kOffline, kP), 64u);
  EXPECT_EQ(bm_closed_form_bits(one, Phase::kOnline, kP), 4 * 64u);
  EXPECT_EQ(bm_closed_form_bits(BilinearSpec::elementwise({1}), Phase::kOffline, kP) / 8, 8u);

  EXPECT_EQ(im2col_closed_form_bits(fwd, Phase::kOnline, kP) / 8, 65936000u);
}

TEST(ProtoBm, AccountingOnlyMatchesClosedForm) {
  ConvShape g{128, 12, 12, 20, 5, 5, 50};
  const auto spec = BilinearSpec::conv2d_fwd(g);
  const auto sim = run_local_sim(kP, 1, [&](Party& p) { bm_multiply_batch(p, {BmRequest{spec}}); },
                                 Party::Options{true});
  EXPECT_EQ(sim.merged.total_bits(Phase::kOnline) + sim.merged.total_bits(Phase::kOffline),
            9575040u * 8);
}

TEST(ProtoBm, BatchIsOneRound) {
  std::mt19937_64 rng(3);
  const auto s1 = BilinearSpec::matmul(2, 3, 4), s2 = BilinearSpec::elementwise({5});
  const auto a1 = random_tensor(s1.shape_a(), rng, kP), b1 = random_tensor(s1.shape_b(), rng, kP);
  const auto a2 = random_tensor(s2.shape_a(), rng, kP), b2 = random_tensor(s2.shape_b(), rng, kP);
  const auto A1 = share(a1, rng, kP), B1 = share(b1, rng, kP), A2 = share(a2, rng, kP), B2 = share(b2, rng, kP);
  Slot c1, c2;
  const auto sim = run_local_sim(kP, 2, [&](Party& p) {
    const auto x1 = p.input(A1), y1 = p.input(B1), x2 = p.input(A2), y2 = p.input(B2);
    auto r = bm_multiply_batch(p, {BmRequest{s1, &x1, &y1}, BmRequest{s2, &x2, &y2}});
    p.keep(c1.shares, r[0].c);
    p.keep(c2.shares, r[1].c);
  });
  EXPECT_EQ(sim.merged.rounds(Phase::kOnline), 1u);
  EXPECT_EQ(c1.open(kP), eval(s1, a1, b1, kP));
  EXPECT_EQ(c2.open(kP), eval(s2, a2, b2, kP));
}

TEST(ProtoBm, MaskReuse) {
  std::mt19937_64 rng(4);
  const auto spec = BilinearSpec::elementwise({6});
  const auto x = random_tensor({6}, rng, kP), y = random_tensor({6}, rng, kP), z = random_tensor({6}, rng, kP);
  const auto X = share(x, rng, kP), Y = share(y, rng, kP), Z = share(z, rng, kP);
  Slot c1, c2;
  const auto sim = run_local_sim(kP, 3, [&](Party& p) {
    const auto xs = p.input(X), ys = p.input(Y), zs = p.input(Z);
    auto r1 = bm_multiply(p, spec, xs, ys);
    auto r2 = bm_multiply(p, spec, xs, zs, &r1.mask_a);
    p.keep(c1.shares, r1.c);
    p.keep(c2.shares, r2.c);
  });
  EXPECT_EQ(c1.open(kP), eval(spec, x, y, kP));
  EXPECT_EQ(c2.open(kP), eval(spec, x, z, kP));
  // First call opens both operands, the second only z.
  EXPECT_EQ(sim.merged.total_bits(Phase::kOnline), (2 * 12 + 2 * 6) * 64u);
}

TEST(ProtoBm, StaleMaskRejected) {
  std::mt19937_64 rng(5);
  const auto spec = BilinearSpec::elementwise({4});
  const auto X = share(random_tensor({4}, rng, kP), rng, kP);
  const auto Y = share(random_tensor({4}, rng, kP), rng, kP);
  EXPECT_THROW(run_local_sim(kP, 4,
                             [&](Party& p) {
                               auto xs = p.input(X);
                               const auto ys = p.input(Y);
                               auto r1 = bm_multiply(p, spec, xs, ys);
                               if (p.computing()) xs = add_public(p, xs, FixedTensor({4}, {1, 1, 1, 1}, 0));
                               bm_multiply(p, spec, xs, ys, &r1.mask_a);
                             }),
               ProtocolError);
}

TEST(ProtoBm, OperandShapeChecked) {
  const auto spec = BilinearSpec::matmul(2, 2, 2);
  std::mt19937_64 rng(6);
  const auto X = share(random_tensor({2, 3}, rng, kP), rng, kP);
  const auto Y = share(random_tensor({2, 2}, rng, kP), rng, kP);
  EXPECT_THROW(run_local_sim(kP, 5, [&](Party& p) {
                 const auto xs = p.input(X), ys = p.input(Y);
                 bm_multiply(p, spec, xs, ys);
               }),
               ShapeError);
}

// Test-only backdoor: capture the dealer's offline message and rebuild the
// bundle from the keys to check c~0 + c~1 = f(a~, b~).
TEST(ProtoBm, BundleInvariant) {
  std::mt19937_64 rng(7);
  const std::uint64_t seed = 99;
  ConvShape g{1, 4, 4, 2, 2, 2, 2};
  const auto spec = BilinearSpec::conv2d_fwd(g);
  const auto X = share(random_tensor(spec.shape_a(), rng, kP), rng, kP);
  const auto F = share(random_tensor(spec.shape_b(), rng, kP), rng, kP);
  std::mutex mu;
  std::vector<std::uint64_t> c1_words;
  std::uint64_t tag = 0;
  run_local_sim(
      kP, seed,
      [&](Party& p) {
        const auto a = p.input(X), b = p.input(F);
        bm_multiply(p, spec, a, b);
      },
      {},
      [&](const SendEvent& e) {
        if (e.phase != Phase::kOffline) return;
        std::lock_guard lock(mu);
        c1_words = e.message.words;
        tag = e.message.tag;
      });
  ASSERT_EQ(tag, derive_stream_id("bm", 0, "c"));
  const auto k0 = PrfKey::derive(seed, KeyPair::kP0P2), k1 = PrfKey::derive(seed, KeyPair::kP1P2);
  auto both = [&](std::string_view role, const Shape& shape) {
    const auto id = derive_stream_id("bm", 0, role);
    return add(PrfStream(k0, id).next_tensor(shape, kP, 64), PrfStream(k1, id).next_tensor(shape, kP, 64), kP);
  };
  const auto a = both("a", spec.shape_a()), b = both("b", spec.shape_b());
  const auto c0 = PrfStream(k0, derive_stream_id("bm", 0, "c")).next_tensor(spec.shape_c(), kP, 64);
  const FixedTensor c1(spec.shape_c(), c1_words, 0);
  EXPECT_EQ(add(c0, c1, kP), eval(spec, a, b, kP));
}

TEST(ProtoBm, Im2colBaselineCorrect) {
  std::mt19937_64 rng(8);
  ConvShape g{2, 5, 5, 2, 3, 3, 2, 1, 1};
  for (const auto& spec : {BilinearSpec::conv2d_fwd(g), BilinearSpec::conv2d_bwd_input(g),
                           BilinearSpec::conv2d_bwd_filter(g)}) {
    const auto a = random_tensor(spec.shape_a(), rng, kP), b = random_tensor(spec.shape_b(), rng, kP);
    const auto A = share(a, rng, kP), B = share(b, rng, kP);
    Slot c;
    const auto sim = run_local_sim(kP, 9, [&](Party& p) {
      const auto x = p.input(A), y = p.input(B);
      p.keep(c.shares, im2col_baseline_multiply(p, spec, x, y));
    });
    EXPECT_EQ(c.open(kP), eval(spec, a, b, kP)) << spec.describe();
    EXPECT_EQ(sim.merged.total_bits(Phase::kOnline), im2col_closed_form_bits(spec, Phase::kOnline, kP));
    EXPECT_EQ(sim.merged.total_bits(Phase::kOffline), im2col_closed_form_bits(spec, Phase::kOffline, kP));
  }
}

TEST(ProtoBm, DesyncedScheduleDetected) {
  std::mt19937_64 rng(10);
  const auto X = share(random_tensor({3}, rng, kP), rng, kP);
  // P1 runs a different number of multiplications than the dealer schedules.
  EXPECT_ANY_THROW(run_local_sim(kP, 11, [&](Party& p) {
    const auto x = p.input(X);
    bm_multiply(p, BilinearSpec::elementwise({3}), x, x);
    if (p.online() && p.index() == 1) bm_multiply(p, BilinearSpec::elementwise({3}), x, x);
  }));
}
