#include "bmpc/ring.hpp"

#include <cmath>
#include <sstream>

#include "bmpc/error.hpp"

namespace bmpc {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void RingParams::validate() const {
  if (n != 32 && n != 64) {
    throw ConfigError("ring bit width must be 32 or 64, got " + std::to_string(n));
  }
  if (f < 1 || 2 * f >= n) {
    throw ConfigError("fractional bits must satisfy 1 <= f and 2f < n (f=" +
                      std::to_string(f) + ", n=" + std::to_string(n) + ")");
  }
}

void RingParams::check_scale(int scale) const {
  if (scale != 0 && scale != static_cast<int>(f) && scale != 2 * static_cast<int>(f)) {
    throw ShapeError("scale " + std::to_string(scale) + " is not one of {0, f, 2f}");
  }
}

FixedTensor::FixedTensor(Shape shape, int scale)
    : shape_(std::move(shape)), words_(numel(shape_), 0), scale_(scale) {}

FixedTensor::FixedTensor(Shape shape, std::vector<Word> words, int scale)
    : shape_(std::move(shape)), words_(std::move(words)), scale_(scale) {
  if (words_.size() != numel(shape_)) {
    throw ShapeError("tensor has " + std::to_string(words_.size()) +
                     " words but shape " + shape_str(shape_));
  }
}

FixedTensor FixedTensor::reshaped(Shape shape) const {
  if (numel(shape) != words_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return FixedTensor(std::move(shape), words_, scale_);
}

Word encode_word(double value, const RingParams& params, int scale) {
  const double scaled = std::ldexp(value, scale);
  const double limit = std::ldexp(1.0, static_cast<int>(params.n) - 1);
  if (!(std::fabs(scaled) < limit)) {
    throw OverflowError("value " + std::to_string(value) + " at scale " +
                        std::to_string(scale) + " does not fit in " +
                        std::to_string(params.n) + " bits");
  }
  // Default rounding mode is round-to-nearest, ties to even.
  const double rounded = std::nearbyint(scaled);
  return from_signed(static_cast<std::int64_t>(rounded), params);
}

FixedTensor encode(std::span<const double> values, const Shape& shape,
                   const RingParams& params, int scale) {
  if (values.size() != numel(shape)) {
    throw ShapeError("encode: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  std::vector<Word> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = encode_word(values[i], params, scale);
  }
  return FixedTensor(shape, std::move(words), scale);
}

FixedTensor encode(double value, const RingParams& params, int scale) {
  return FixedTensor({1}, {encode_word(value, params, scale)}, scale);
}

double decode_word(Word w, const RingParams& params, int scale) {
  return std::ldexp(static_cast<double>(to_signed(w, params)), -scale);
}

std::vector<double> decode(const FixedTensor& t, const RingParams& params) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = decode_word(t[i], params, t.scale());
  return out;
}

namespace {

void require_same(const FixedTensor& a, const FixedTensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  if (a.scale() != b.scale()) {
    throw ShapeError(std::string(op) + ": scale mismatch " + std::to_string(a.scale()) +
                     " vs " + std::to_string(b.scale()));
  }
}

}  // namespace

FixedTensor add(const FixedTensor& a, const FixedTensor& b, const RingParams& p) {
  require_same(a, b, "add");
  FixedTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = reduce(a[i] + b[i], p);
  return out;
}

FixedTensor sub(const FixedTensor& a, const FixedTensor& b, const RingParams& p) {
  require_same(a, b, "sub");
  FixedTensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = reduce(a[i] - b[i], p);
  return out;
}

FixedTensor neg(const FixedTensor& a, const RingParams& p) {
  FixedTensor out = a;
  for (auto& w : out.words()) w = reduce(Word{0} - w, p);
  return out;
}

FixedTensor scale_by_public_int(const FixedTensor& a, std::int64_t k, const RingParams& p) {
  FixedTensor out = a;
  const Word kw = static_cast<Word>(k);
  for (auto& w : out.words()) w = reduce(w * kw, p);
  return out;
}

FixedTensor truncate_local_share(const FixedTensor& share, unsigned d, int party,
                                 const RingParams& p) {
  if (d == 0) return share;
  if (d >= p.n) throw ShapeError("truncation shift exceeds ring width");
  FixedTensor out = share;
  out.set_scale(share.scale() - static_cast<int>(d));
  for (auto& w : out.words()) {
    if (party == 0) {
      w = from_signed(to_signed(w, p) >> d, p);
    } else {
      const std::int64_t negated = to_signed(reduce(Word{0} - w, p), p);
      w = reduce(Word{0} - from_signed(negated >> d, p), p);
    }
  }
  return out;
}

}  // namespace bmpc
