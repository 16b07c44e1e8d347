#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "bmpc/error.hpp"
#include "bmpc/nn_train.hpp"
#include "bmpc/nonlinear.hpp"
#include "bmpc/proto_bm.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace bmpc;
using testing_support::encode_vec;
using testing_support::Slot;

namespace {

const RingParams kP{64, 14};
const double kLsb = std::ldexp(1.0, -14);

std::filesystem::path write_tmp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path;
}

std::vector<double> lr_secure_step(const std::vector<double>& X, const std::vector<double>& y,
                                   const std::vector<double>& w, std::size_t B, std::size_t d,
                                   double lr, SimResult* sim = nullptr) {
  std::mt19937_64 rng(1);
  const auto Xs = share(encode_vec(X, {B, d}, kP, 14), rng, kP);
  const auto ys = share(encode_vec(y, {B}, kP, 14), rng, kP);
  const auto ws = share(encode_vec(w, {d}, kP, 14), rng, kP);
  Slot out;
  auto s = run_local_sim(kP, 2, [&](Party& p) {
    p.keep(out.shares, lr_train_step(p, p.input(Xs), p.input(ys), p.input(ws), lr));
  });
  if (sim) *sim = s;
  return decode(out.open(kP), kP);
}

}  // namespace

TEST(LogReg, HandStep) {
  const auto w = lr_secure_step({1.0}, {1.0}, {0.0}, 1, 1, 0.25);
  EXPECT_NEAR(w[0], 0.125, 4 * kLsb);
}

TEST(LogReg, ZeroResidualLeavesWeights) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t B = 16, d = 4;
  std::vector<double> X(B * d), y(B, 0.5), w(d, 0.0);
  for (auto& v : X) v = u(rng);
  const auto w1 = lr_secure_step(X, y, w, B, d, 0.5);
  for (double v : w1) EXPECT_LE(std::fabs(v), 2 * kLsb);
}

TEST(LogReg, CostMatchesClosedForm) {
  const std::size_t B = 8, d = 3;
  std::vector<double> X(B * d, 0.1), y(B, 1.0), w(d, 0.2);
  SimResult sim;
  lr_secure_step(X, y, w, B, d, 0.01, &sim);
  EXPECT_EQ(sim.merged.total_bits(Phase::kOnline), lr_step_closed_form_bits(B, d, Phase::kOnline, kP));
  EXPECT_EQ(sim.merged.total_bits(Phase::kOffline), lr_step_closed_form_bits(B, d, Phase::kOffline, kP));
  EXPECT_EQ(sim.merged.rounds(Phase::kOnline), kLrStepRounds);
}

TEST(LogReg, TracksFixedPointMirror) {
  const auto ds = make_blobs(64, 5, 4);
  const std::size_t B = 32, d = 5;
  std::vector<double> X(ds.X.begin(), ds.X.begin() + B * d), y(ds.y.begin(), ds.y.begin() + B);
  const std::vector<double> w = {0.1, -0.2, 0.3, 0.05, -0.1};
  const auto secure = lr_secure_step(X, y, w, B, d, 0.1);
  const auto Xe = encode_vec(X, {B, d}, kP, 14), ye = encode_vec(y, {B}, kP, 14), we = encode_vec(w, {d}, kP, 14);
  const auto sim = lr_sim_step(Xe.words(), ye.words(), we.words(), B, d, 0.1, kP);
  for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(secure[k], decode_word(sim[k], kP, 14), 2 * kLsb);
}

TEST(LogReg, FloatOracleLearnsBlobs) {
  const auto ds = make_blobs(400, 4, 5);
  const auto w = oracle::train_lr_float(ds, std::vector<double>(4, 0.0), shuffled_order(400, 6), 32, 50, 0.1);
  for (double v : w) EXPECT_GT(v, 0.0);
}

TEST(Data, BlobsAndOrder) {
  const auto ds = make_blobs(10, 3, 1);
  EXPECT_EQ(ds.X.size(), 30u);
  for (std::size_t r = 0; r < 10; ++r) EXPECT_EQ(ds.y[r], r % 2 ? 1.0 : 0.0);
  auto o = shuffled_order(50, 2);
  EXPECT_EQ(o, shuffled_order(50, 2));
  std::sort(o.begin(), o.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(o[i], i);
  for (double v : glorot_uniform(3, 2, 100, 1)) EXPECT_LE(std::fabs(v), std::sqrt(6.0 / 5.0));
}

TEST(Data, CsvLoader) {
  const auto ok = write_tmp("bmpc_ok.csv", "1,10,0\n2,20,1\n3,30,1\n");
  const auto ds = load_csv(ok);
  EXPECT_EQ(ds.rows, 3u);
  EXPECT_EQ(ds.cols, 2u);
  EXPECT_EQ(ds.X[0], -1.0);
  EXPECT_EQ(ds.X[2], 0.0);
  EXPECT_EQ(ds.X[5], 1.0);
  EXPECT_EQ(ds.y, (std::vector<double>{0, 1, 1}));

  // Round trip through sharing is exact.
  std::mt19937_64 rng(1);
  const auto t = encode_vec(ds.X, {3, 2}, kP, 14);
  const auto [s0, s1] = share(t, rng, kP);
  EXPECT_EQ(reconstruct(s0, s1, kP), t);

  EXPECT_THROW(load_csv(write_tmp("bmpc_lbl.csv", "1,2,0\n3,4,2\n")), ParseError);
  EXPECT_NO_THROW(load_csv(write_tmp("bmpc_lbl2.csv", "1,2,0\n3,4,2\n"), false));
  EXPECT_THROW(load_csv(write_tmp("bmpc_ragged.csv", "1,2,0\n3,1\n")), ParseError);
  EXPECT_THROW(load_csv(write_tmp("bmpc_text.csv", "1,2,0\n3,abc,1\n")), ParseError);
  EXPECT_THROW(load_csv(write_tmp("bmpc_header.csv", "x1,x2,label\n1,2,0\n")), ParseError);
  EXPECT_THROW(load_csv("/nonexistent/bmpc.csv"), ConfigError);
}

TEST(Data, TakeRows) {
  const FixedTensor t({3, 2}, {1, 2, 3, 4, 5, 6}, 0);
  const std::vector<std::size_t> idx = {2, 0};
  EXPECT_EQ(take_rows(t, idx), FixedTensor({2, 2}, {5, 6, 1, 2}, 0));
}

// Bilinear backward maps with a zero upstream gradient reconstruct to zero.
TEST(Cnn, ZeroUpstreamGivesZeroGradient) {
  CnnShape shape;
  const auto g = shape.conv();
  const auto [bi, bf] = backward_specs(BilinearSpec::conv2d_fwd(g));
  std::mt19937_64 rng(7);
  const auto dz = share(FixedTensor(g.output_shape(), 14), rng, kP);
  const auto x = share(testing_support::random_tensor(g.input_shape(), rng, kP, 14), rng, kP);
  const auto k = share(testing_support::random_tensor(g.filter_shape(), rng, kP, 14), rng, kP);
  Slot dk, dx;
  run_local_sim(kP, 8, [&](Party& p) {
    const auto d = p.input(dz), xs = p.input(x), ks = p.input(k);
    auto r = bm_multiply_batch(p, {BmRequest{bf, &d, &xs}, BmRequest{bi, &d, &ks}});
    p.keep(dk.shares, r[0].c);
    p.keep(dx.shares, r[1].c);
  });
  const auto gk = dk.open(kP), gx = dx.open(kP);
  for (Word w : gk.words()) EXPECT_EQ(w, 0u);
  for (Word w : gx.words()) EXPECT_EQ(w, 0u);
}

namespace {

struct CnnCase {
  CnnShape shape;
  std::vector<double> X, onehot, K, W;
};

CnnStepResult secure_cnn_step(const CnnCase& c, double lr, std::array<FixedTensor, 5>* opened) {
  std::mt19937_64 rng(9);
  const auto g = c.shape.conv();
  const auto Xs = share(encode_vec(c.X, g.input_shape(), kP, 14), rng, kP);
  const auto Os = share(encode_vec(c.onehot, {c.shape.batch, c.shape.classes}, kP, 14), rng, kP);
  const auto Ks = share(encode_vec(c.K, g.filter_shape(), kP, 14), rng, kP);
  const auto Ws = share(encode_vec(c.W, {c.shape.hidden(), c.shape.classes}, kP, 14), rng, kP);
  std::array<Slot, 5> s;
  run_local_sim(kP, 10, [&](Party& p) {
    const auto r = cnn_train_step(p, c.shape, p.input(Xs), p.input(Os), {p.input(Ks), p.input(Ws)}, lr);
    p.keep(s[0].shares, r.model.K);
    p.keep(s[1].shares, r.model.W);
    p.keep(s[2].shares, r.probs);
    p.keep(s[3].shares, r.dK);
    p.keep(s[4].shares, r.dW);
  });
  for (int i = 0; i < 5; ++i) (*opened)[i] = s[i].open(kP);
  return {};
}

}  // namespace

TEST(Cnn, UniformLogitsHeadGradient) {
  CnnCase c;
  c.shape.batch = 2;
  const auto g = c.shape.conv();
  const std::size_t H = c.shape.hidden(), M = c.shape.classes, B = c.shape.batch;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  c.X.resize(numel(g.input_shape()));
  for (auto& v : c.X) v = u(rng);
  c.K.resize(numel(g.filter_shape()));
  for (auto& v : c.K) v = 0.3 * u(rng);
  c.W.assign(H * M, 0.0);
  c.onehot = {1, 0, 0, 0, 0, 1};
  std::array<FixedTensor, 5> o;
  secure_cnn_step(c, 0.1, &o);
  const auto probs = decode(o[2], kP);
  for (double v : probs) EXPECT_NEAR(v, 1.0 / M, 2 * kLsb);
  // dW = h^T (1/M - onehot) / B with h the Fourier sigmoid of the conv.
  auto h = oracle::conv_fwd_real(g, c.X, c.K);
  for (auto& v : h) v = fourier_sigmoid_real(v);
  const auto dW = decode(o[4], kP);
  for (std::size_t j = 0; j < H; ++j)
    for (std::size_t k = 0; k < M; ++k) {
      double e = 0;
      for (std::size_t b = 0; b < B; ++b) e += h[b * H + j] * (1.0 / M - c.onehot[b * M + k]) / B;
      EXPECT_NEAR(dW[j * M + k], e, 1e-3);
    }
}

// Single example, one 2x2 filter: secure dK against central differences of
// the float loss, compared in norm.
TEST(Cnn, FilterGradientFiniteDifference) {
  CnnCase c;
  c.shape.batch = 1;
  c.shape.height = c.shape.width = 4;
  c.shape.filter = 2;
  c.shape.filters = 1;
  const auto g = c.shape.conv();
  const std::size_t H = c.shape.hidden(), M = c.shape.classes;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  c.X.resize(numel(g.input_shape()));
  for (auto& v : c.X) v = u(rng);
  c.K.resize(numel(g.filter_shape()));
  for (auto& v : c.K) v = u(rng);
  c.W.resize(H * M);
  for (auto& v : c.W) v = u(rng);
  c.onehot = {0, 1, 0};
  std::array<FixedTensor, 5> o;
  secure_cnn_step(c, 0.1, &o);
  const auto dK = decode(o[3], kP);
  const double h = std::ldexp(1.0, -6);
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < c.K.size(); ++i) {
    auto kp = c.K, km = c.K;
    kp[i] += h;
    km[i] -= h;
    const double fd = (oracle::cnn_loss(c.shape, c.X, c.onehot, kp, c.W) -
                       oracle::cnn_loss(c.shape, c.X, c.onehot, km, c.W)) / (2 * h);
    diff += (dK[i] - fd) * (dK[i] - fd);
    norm += fd * fd;
  }
  EXPECT_LE(std::sqrt(diff), 1e-2 * std::sqrt(norm));
}

TEST(Cnn, TracksFixedPointMirror) {
  CnnCase c;
  const auto g = c.shape.conv();
  const std::size_t H = c.shape.hidden(), M = c.shape.classes, B = c.shape.batch;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  c.X.resize(numel(g.input_shape()));
  for (auto& v : c.X) v = u(rng);
  c.K.resize(numel(g.filter_shape()));
  for (auto& v : c.K) v = 0.5 * u(rng);
  c.W.resize(H * M);
  for (auto& v : c.W) v = 0.3 * u(rng);
  c.onehot.assign(B * M, 0.0);
  for (std::size_t b = 0; b < B; ++b) c.onehot[b * M + b % M] = 1.0;
  std::array<FixedTensor, 5> o;
  secure_cnn_step(c, 0.1, &o);
  const auto e = [&](const std::vector<double>& v, const Shape& s) { return encode_vec(v, s, kP, 14); };
  const auto sim = cnn_sim_step(c.shape, e(c.X, g.input_shape()).words(), e(c.onehot, {B, M}).words(),
                                e(c.K, g.filter_shape()).words(), e(c.W, {H, M}).words(), 0.1, kP);
  for (std::size_t i = 0; i < sim.K.size(); ++i)
    EXPECT_NEAR(decode_word(o[0][i], kP, 14), decode_word(sim.K[i], kP, 14), 2 * kLsb);
  for (std::size_t i = 0; i < sim.W.size(); ++i)
    EXPECT_NEAR(decode_word(o[1][i], kP, 14), decode_word(sim.W[i], kP, 14), 2 * kLsb);
}
