#include "bmpc/nn_train.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "bmpc/error.hpp"
#include "bmpc/nonlinear.hpp"
#include "bmpc/proto_bm.hpp"
#include "bmpc/sharing.hpp"

namespace bmpc {

// ---------------------------------------------------------------- data

Dataset load_csv(const std::filesystem::path& path, bool binary_labels) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      const char* b = cell.c_str();
      char* e = nullptr;
      const double v = std::strtod(b, &e);
      while (e && (*e == ' ' || *e == '\t')) ++e;
      if (e == b || (e && *e != '\0') || !std::isfinite(v)) {
        throw ParseError(path.string() + ": row " + std::to_string(lineno) + ", column " +
                         std::to_string(col) + ": not a number: '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() < 2) {
      throw ParseError(path.string() + ": row " + std::to_string(lineno) +
                       ": need at least one feature and a label");
    }
    if (ds.rows == 0) {
      ds.cols = row.size() - 1;
    } else if (row.size() - 1 != ds.cols) {
      throw ParseError(path.string() + ": row " + std::to_string(lineno) + " has " +
                       std::to_string(row.size()) + " columns, expected " +
                       std::to_string(ds.cols + 1));
    }
    const double label = row.back();
    if (binary_labels && label != 0.0 && label != 1.0) {
      throw ParseError(path.string() + ": row " + std::to_string(lineno) + ", column " +
                       std::to_string(row.size()) + ": label must be 0 or 1");
    }
    ds.X.insert(ds.X.end(), row.begin(), row.end() - 1);
    ds.y.push_back(label);
    ++ds.rows;
  }
  if (ds.rows == 0) throw ParseError(path.string() + ": no data rows");

  for (std::size_t c = 0; c < ds.cols; ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t r = 0; r < ds.rows; ++r) {
      lo = std::min(lo, ds.X[r * ds.cols + c]);
      hi = std::max(hi, ds.X[r * ds.cols + c]);
    }
    for (std::size_t r = 0; r < ds.rows; ++r) {
      double& v = ds.X[r * ds.cols + c];
      v = hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0;
    }
  }
  return ds;
}

Dataset make_blobs(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.rows = rows;
  ds.cols = cols;
  ds.X.resize(rows * cols);
  ds.y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double label = static_cast<double>(r % 2);
    const double centre = label > 0.5 ? 1.0 : -1.0;
    ds.y[r] = label;
    for (std::size_t c = 0; c < cols; ++c) ds.X[r * cols + c] = centre + noise(rng);
  }
  return ds;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // std::shuffle is implementation-defined; this keeps runs reproducible.
  boost::random::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  boost::random::mt19937_64 rng(seed);
  boost::random::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> out(count);
  for (auto& v : out) v = u(rng);
  return out;
}

FixedTensor take_rows(const FixedTensor& t, std::span<const std::size_t> rows) {
  if (t.shape().empty()) throw ShapeError("take_rows: scalar tensor");
  const std::size_t stride = t.size() / t.shape()[0];
  Shape shape = t.shape();
  shape[0] = rows.size();
  FixedTensor out(shape, t.scale());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.shape()[0]) throw ShapeError("take_rows: row index out of range");
    std::copy_n(t.words().begin() + rows[i] * stride, stride, out.words().begin() + i * stride);
  }
  return out;
}

// ---------------------------------------------------------------- logistic regression

FixedTensor lr_train_step(Party& party, const FixedTensor& X, const FixedTensor& y,
                          const FixedTensor& w, double lr) {
  const auto& p = party.params();
  if (X.shape().size() != 2) throw ShapeError("lr_train_step: X must be (B, d)");
  const std::size_t B = X.shape()[0], d = X.shape()[1];
  if (y.shape() != Shape{B} || w.shape() != Shape{d}) {
    throw ShapeError("lr_train_step: y must be (B) and w must be (d)");
  }

  const auto fwd = BilinearSpec::matmul(B, d, 1);
  auto logits = truncate(party, bm_multiply(party, fwd, X, w.reshaped({d, 1})).c, p.f);
  const auto prob = sigmoid_fourier(party, logits.reshaped({B})).value;
  const auto residual = sub(prob, y, p);

  const auto grad_spec = BilinearSpec::matmul(MatmulDims{d, B, 1, true, false, false});
  auto g = truncate(party, bm_multiply(party, grad_spec, X, residual.reshaped({B, 1})).c, p.f);
  const auto step = scale_by_public_fixed(party, g.reshaped({d}), lr / static_cast<double>(B),
                                          2 * p.f);
  return sub(w, step, p);
}

std::vector<Word> lr_sim_step(std::span<const Word> X, std::span<const Word> y,
                              std::span<const Word> w, std::size_t batch, std::size_t dim,
                              double lr, const RingParams& p) {
  const int f = static_cast<int>(p.f);
  std::vector<Word> r(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    Word acc = 0;
    for (std::size_t k = 0; k < dim; ++k) acc += X[i * dim + k] * w[k];
    const Word logit = round_shift(reduce(acc, p), p.f, p);
    const Word prob = encode_word(fourier_sigmoid_real(decode_word(logit, p, f)), p, f);
    r[i] = reduce(prob - y[i], p);
  }
  const Word mult = encode_word(lr / static_cast<double>(batch), p, 2 * f);
  std::vector<Word> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    Word acc = 0;
    for (std::size_t i = 0; i < batch; ++i) acc += X[i * dim + k] * r[i];
    const Word g = round_shift(reduce(acc, p), p.f, p);
    out[k] = reduce(w[k] - round_shift(reduce(g * mult, p), 2 * p.f, p), p);
  }
  return out;
}

std::uint64_t lr_step_closed_form_bits(std::size_t batch, std::size_t dim, Phase phase,
                                       const RingParams& p) {
  const auto fwd = BilinearSpec::matmul(batch, dim, 1);
  const auto grad = BilinearSpec::matmul(MatmulDims{dim, batch, 1, true, false, false});
  return bm_closed_form_bits(fwd, phase, p) + bm_closed_form_bits(grad, phase, p) +
         sin_closed_form_bits(batch, 5, kFourierPeriodBits, phase, p);
}

// ---------------------------------------------------------------- toy CNN

std::size_t CnnShape::hidden() const {
  const auto g = conv();
  return g.out_h() * g.out_w() * g.D;
}

CnnStepResult cnn_train_step(Party& party, const CnnShape& shape, const FixedTensor& X,
                             const FixedTensor& onehot, const CnnModel& model, double lr) {
  const auto& p = party.params();
  const auto g = shape.conv();
  const auto fwd = BilinearSpec::conv2d_fwd(g);
  const auto dense = shape.dense();
  const std::size_t B = shape.batch, H = shape.hidden(), M = shape.classes;
  if (onehot.shape() != Shape{B, M}) throw ShapeError("cnn_train_step: onehot must be (B, classes)");

  // Forward.
  const auto z = truncate(party, bm_multiply(party, fwd, X, model.K).c, p.f);
  const auto act = sigmoid_fourier(party, z, true);
  const auto h = act.value.reshaped({B, H});
  const auto logits = truncate(party, bm_multiply(party, dense, h, model.W).c, p.f);
  SoftmaxOptions so;
  so.steps = shape.softmax_steps;
  auto probs = softmax_protocol(party, logits, so);

  // Head gradient (p - onehot) / B.
  const auto head = scale_by_public_fixed(party, sub(probs, onehot, p),
                                          1.0 / static_cast<double>(B), 2 * p.f);

  // Dense backward: dW and dh share one round.
  const auto [dense_bi, dense_bf] = backward_specs(dense);
  auto r1 = bm_multiply_batch(party, {BmRequest{dense_bf, &head, &h}, BmRequest{dense_bi, &head, &model.W}});
  auto dW = truncate(party, r1[0].c, p.f);
  auto dh = truncate(party, r1[1].c, p.f).reshaped(g.output_shape());

  const auto dpre = truncate(
      party, bm_multiply(party, BilinearSpec::elementwise(g.output_shape()), dh, act.derivative).c,
      p.f);

  // Conv backward: filter and input gradients share one round.
  const auto [conv_bi, conv_bf] = backward_specs(fwd);
  auto r2 = bm_multiply_batch(party, {BmRequest{conv_bf, &dpre, &X}, BmRequest{conv_bi, &dpre, &model.K}});
  auto dK = truncate(party, r2[0].c, p.f);
  auto dX = truncate(party, r2[1].c, p.f);

  CnnStepResult out;
  out.model.K = sub(model.K, scale_by_public_fixed(party, dK, lr, 2 * p.f), p);
  out.model.W = sub(model.W, scale_by_public_fixed(party, dW, lr, 2 * p.f), p);
  out.probs = std::move(probs);
  out.dK = std::move(dK);
  out.dW = std::move(dW);
  out.dX = std::move(dX);
  return out;
}

namespace {

FixedTensor round_all(FixedTensor t, unsigned d, const RingParams& p) {
  for (auto& w : t.words()) w = round_shift(w, d, p);
  t.set_scale(t.scale() - static_cast<int>(d));
  return t;
}

FixedTensor scale_fixed_sim(const FixedTensor& t, double c, const RingParams& p) {
  const Word k = encode_word(c, p, 2 * static_cast<int>(p.f));
  FixedTensor out = t;
  for (auto& w : out.words()) w = round_shift(reduce(w * k, p), 2 * p.f, p);
  return out;
}

}  // namespace

CnnSimResult cnn_sim_step(const CnnShape& shape, std::span<const Word> X,
                          std::span<const Word> onehot, std::span<const Word> K,
                          std::span<const Word> W, double lr, const RingParams& p) {
  const int f = static_cast<int>(p.f);
  const auto g = shape.conv();
  const auto fwd = BilinearSpec::conv2d_fwd(g);
  const auto dense = shape.dense();
  const std::size_t B = shape.batch, H = shape.hidden(), M = shape.classes;

  const FixedTensor x(g.input_shape(), {X.begin(), X.end()}, f);
  const FixedTensor k(g.filter_shape(), {K.begin(), K.end()}, f);
  const FixedTensor w({H, M}, {W.begin(), W.end()}, f);
  const FixedTensor oh({B, M}, {onehot.begin(), onehot.end()}, f);

  const auto z = round_all(eval(fwd, x, k, p), p.f, p);
  FixedTensor h(g.output_shape(), f), ds(g.output_shape(), f);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double v = decode_word(z[i], p, f);
    h[i] = encode_word(fourier_sigmoid_real(v), p, f);
    ds[i] = encode_word(fourier_sigmoid_derivative_real(v), p, f);
  }
  const auto hf = h.reshaped({B, H});
  const auto logits = round_all(eval(dense, hf, w, p), p.f, p);
  const FixedTensor probs({B, M}, softmax_fixed_sim(logits.words(), B, M, shape.softmax_steps, p), f);
  const auto head = scale_fixed_sim(sub(probs, oh, p), 1.0 / static_cast<double>(B), p);

  const auto [dense_bi, dense_bf] = backward_specs(dense);
  const auto dW = round_all(eval(dense_bf, head, hf, p), p.f, p);
  const auto dh = round_all(eval(dense_bi, head, w, p), p.f, p).reshaped(g.output_shape());
  const auto dpre = round_all(eval(BilinearSpec::elementwise(g.output_shape()), dh, ds, p), p.f, p);
  const auto [conv_bi, conv_bf] = backward_specs(fwd);
  const auto dK = round_all(eval(conv_bf, dpre, x, p), p.f, p);

  CnnSimResult out;
  const auto k2 = sub(k, scale_fixed_sim(dK, lr, p), p);
  const auto w2 = sub(w, scale_fixed_sim(dW, lr, p), p);
  out.K.assign(k2.words().begin(), k2.words().end());
  out.W.assign(w2.words().begin(), w2.words().end());
  out.probs.assign(probs.words().begin(), probs.words().end());
  out.dK.assign(dK.words().begin(), dK.words().end());
  out.dW.assign(dW.words().begin(), dW.words().end());
  return out;
}

}  // namespace bmpc
