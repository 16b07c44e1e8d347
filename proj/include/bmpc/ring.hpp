#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bmpc {

using Word = std::uint64_t;
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Ring Z/2^n with f fractional bits. Words are stored in 64-bit integers and
// always kept reduced mod 2^n.
struct RingParams {
  unsigned n = 64;
  unsigned f = 14;

  Word mask() const { return n == 64 ? ~Word{0} : ((Word{1} << n) - 1); }
  unsigned bytes_per_word() const { return n / 8; }

  // Throws ConfigError unless n in {32, 64} and 1 <= f, 2f < n.
  void validate() const;
  // Throws ShapeError unless scale in {0, f, 2f}.
  void check_scale(int scale) const;

  bool operator==(const RingParams&) const = default;
};

inline Word reduce(Word w, const RingParams& p) { return w & p.mask(); }

// Two's-complement interpretation of an n-bit word.
inline std::int64_t to_signed(Word w, const RingParams& p) {
  if (p.n == 64) return static_cast<std::int64_t>(w);
  const Word sign = Word{1} << (p.n - 1);
  w &= p.mask();
  return (w & sign) ? static_cast<std::int64_t>(w | ~p.mask())
                    : static_cast<std::int64_t>(w);
}

inline Word from_signed(std::int64_t v, const RingParams& p) {
  return static_cast<Word>(v) & p.mask();
}

// Flat tensor of ring words with a fixed-point scale: each word encodes
// value * 2^scale.
class FixedTensor {
 public:
  FixedTensor() = default;
  FixedTensor(Shape shape, int scale);
  FixedTensor(Shape shape, std::vector<Word> words, int scale);

  const Shape& shape() const { return shape_; }
  int scale() const { return scale_; }
  std::size_t size() const { return words_.size(); }

  std::span<const Word> words() const { return words_; }
  std::span<Word> words() { return words_; }
  std::vector<Word>& storage() { return words_; }

  Word operator[](std::size_t i) const { return words_[i]; }
  Word& operator[](std::size_t i) { return words_[i]; }

  void set_scale(int scale) { scale_ = scale; }
  // Same words, new shape with equal element count.
  FixedTensor reshaped(Shape shape) const;

  bool operator==(const FixedTensor&) const = default;

 private:
  Shape shape_;
  std::vector<Word> words_;
  int scale_ = 0;
};

FixedTensor encode(std::span<const double> values, const Shape& shape,
                   const RingParams& params, int scale);
FixedTensor encode(double value, const RingParams& params, int scale);
// Single-word encode without building a tensor.
Word encode_word(double value, const RingParams& params, int scale);

std::vector<double> decode(const FixedTensor& t, const RingParams& params);
double decode_word(Word w, const RingParams& params, int scale);

FixedTensor add(const FixedTensor& a, const FixedTensor& b, const RingParams& p);
FixedTensor sub(const FixedTensor& a, const FixedTensor& b, const RingParams& p);
FixedTensor neg(const FixedTensor& a, const RingParams& p);
// Multiplies by a public integer; the scale is unchanged.
FixedTensor scale_by_public_int(const FixedTensor& a, std::int64_t k,
                                const RingParams& p);

// SecureML-style local truncation of one party's share by d bits. Party 0
// shifts its share arithmetically, party 1 negates, shifts and negates back.
// The reconstruction equals floor(x / 2^d) or floor(x / 2^d) + 1 except with
// probability about |x| / 2^(n-1) per element. The result's scale is
// share.scale() - d; callers dividing by a power of two reset it.
FixedTensor truncate_local_share(const FixedTensor& share, unsigned d,
                                 int party, const RingParams& p);

}  // namespace bmpc
