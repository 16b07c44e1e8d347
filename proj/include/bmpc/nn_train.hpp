#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bmpc/bilinear.hpp"
#include "bmpc/party.hpp"

namespace bmpc {

// ---------------------------------------------------------------- data

struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> X;  // row-major (rows, cols)
  std::vector<double> y;
};

// Numeric CSV, label in the last column. Features are min-max scaled to
// [-1, 1] per column. With binary_labels, labels must be 0 or 1.
Dataset load_csv(const std::filesystem::path& path, bool binary_labels = true);

// Two unit-variance Gaussian clusters centred at -1 and +1 in every
// coordinate; label 1 for the +1 cluster. Classes alternate by row.
Dataset make_blobs(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   std::uint64_t seed);

// Gathers rows of a (rows, ...) tensor; works on shares since it is linear.
FixedTensor take_rows(const FixedTensor& t, std::span<const std::size_t> rows);

// ---------------------------------------------------------------- logistic regression

// One SGD step on a batch: X (B, d), y (B), w (d), all at scale f.
FixedTensor lr_train_step(Party& party, const FixedTensor& X, const FixedTensor& y,
                          const FixedTensor& w, double lr);

// Plaintext fixed-point mirror of lr_train_step with nearest rounding.
std::vector<Word> lr_sim_step(std::span<const Word> X, std::span<const Word> y,
                              std::span<const Word> w, std::size_t batch, std::size_t dim,
                              double lr, const RingParams& p);

std::uint64_t lr_step_closed_form_bits(std::size_t batch, std::size_t dim, Phase phase,
                                       const RingParams& p);
inline constexpr std::uint64_t kLrStepRounds = 3;

// ---------------------------------------------------------------- toy CNN

// conv (C=1 -> D filters, r x s) -> Fourier sigmoid -> dense -> softmax head.
struct CnnShape {
  std::size_t batch = 4;
  std::size_t height = 8, width = 8;
  std::size_t filter = 3;
  std::size_t filters = 2;
  std::size_t classes = 3;
  unsigned softmax_steps = 16;

  ConvShape conv() const { return {batch, height, width, 1, filter, filter, filters}; }
  std::size_t hidden() const;
  BilinearSpec dense() const { return BilinearSpec::matmul(batch, hidden(), classes); }
};

struct CnnModel {
  FixedTensor K;  // (1, r, s, D)
  FixedTensor W;  // (hidden, classes)
};

struct CnnStepResult {
  CnnModel model;     // after the update
  FixedTensor probs;  // (B, classes)
  FixedTensor dK, dW, dX;
};

// X (B, h, w, 1) and onehot (B, classes) are shares at scale f.
CnnStepResult cnn_train_step(Party& party, const CnnShape& shape, const FixedTensor& X,
                             const FixedTensor& onehot, const CnnModel& model, double lr);

struct CnnSimResult {
  std::vector<Word> K, W, probs, dK, dW;
};
CnnSimResult cnn_sim_step(const CnnShape& shape, std::span<const Word> X,
                          std::span<const Word> onehot, std::span<const Word> K,
                          std::span<const Word> W, double lr, const RingParams& p);

}  // namespace bmpc
