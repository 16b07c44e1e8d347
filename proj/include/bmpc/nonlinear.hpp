#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bmpc/party.hpp"
#include "bmpc/proto_bm.hpp"

namespace bmpc {

// ---------------------------------------------------------------- sine

// Opened mask difference and the sine/cosine mask shares of one Pi_Sin call.
struct SinCorrelation {
  std::vector<Word> delta;             // (x - x~) mod 2^(m+f), public
  std::vector<FixedTensor> sin_share;  // u_i per frequency, scale f
  std::vector<FixedTensor> cos_share;  // v_i per frequency, scale f
};

// One round; 2(m+f) online bits and 2 L n offline bits per element.
SinCorrelation sin_open(Party& party, const FixedTensor& x, std::span<const int> k, unsigned m);

// Angle 2 pi (k * delta mod 2^bits) / 2^bits, exact in the integer part.
double masked_angle(Word delta, int k, unsigned bits);

// Shares of sin(2 pi k_j x / 2^m), one tensor per frequency, scale 2f.
std::vector<FixedTensor> sin_protocol(Party& party, const FixedTensor& x, std::span<const int> k,
                                      unsigned m);

std::uint64_t sin_closed_form_bits(std::size_t elements, std::size_t frequencies, unsigned m,
                                   Phase phase, const RingParams& p);

// ---------------------------------------------------------------- sigmoid

inline constexpr std::array<double, 6> kFourierSigmoid = {
    0.5, 0.61727893, -0.03416704, 0.16933091, -0.04596946, 0.08159136};
inline constexpr unsigned kFourierPeriodBits = 5;

// Constant plus odd coefficients a1, a3, a5, a7, a9.
inline constexpr std::array<double, 6> kChebyshevSigmoid = {
    0.5, 0.2159198015, -0.0082176259, 0.0001825597, -0.0000018848, 0.0000000072};

struct SigmoidOutput {
  FixedTensor value;       // scale f
  FixedTensor derivative;  // scale f, only when requested
};

// a0 + sum_j a_j sin(2 pi j x / 32). The derivative comes from the same
// correlation at no extra communication.
SigmoidOutput sigmoid_fourier(Party& party, const FixedTensor& x, bool with_derivative = false);

// Degree-9 odd polynomial evaluated on x/8 with five sequential products.
FixedTensor sigmoid_chebyshev(Party& party, const FixedTensor& x);

double fourier_sigmoid_real(double x);
double fourier_sigmoid_derivative_real(double x);
double chebyshev_sigmoid_real(double x);

// ---------------------------------------------------------------- softmax

struct SoftmaxOptions {
  unsigned steps = 16;  // power of two
  // Called after every Euler step with the step index (1-based).
  std::function<void(unsigned, const FixedTensor&)> on_iteration;
};

// x has shape (B, classes) at scale f; returns probabilities at scale f.
FixedTensor softmax_protocol(Party& party, const FixedTensor& x, const SoftmaxOptions& options = {});

// Steady-state online bits of one Euler step for `rows` rows, and the
// one-time cost of opening x.
std::uint64_t softmax_step_bits(std::size_t rows, std::size_t classes, const RingParams& p);
std::uint64_t softmax_one_time_bits(std::size_t rows, std::size_t classes, const RingParams& p);
std::uint64_t softmax_rounds(unsigned steps);

// Plaintext fixed-point mirror of the protocol with nearest rounding at each
// truncation point. Input words at scale f, output words at scale f.
std::vector<Word> softmax_fixed_sim(std::span<const Word> x, std::size_t rows,
                                    std::size_t classes, unsigned steps, const RingParams& p);

// Rounded arithmetic shift used by all plaintext fixed-point simulators.
Word round_shift(Word w, unsigned d, const RingParams& p);

}  // namespace bmpc
