#include "bmpc/bilinear.hpp"

#include <algorithm>
#include <sstream>

#include "bmpc/error.hpp"

namespace bmpc {

std::string to_string(BilinearKind k) {
  switch (k) {
    case BilinearKind::kElementwise: return "elementwise_mul";
    case BilinearKind::kScalarVec: return "scalar_vec_mul";
    case BilinearKind::kMatmul: return "matmul";
    case BilinearKind::kConv2dFwd: return "conv2d_fwd";
    case BilinearKind::kConv2dBwdInput: return "conv2d_bwd_input";
    case BilinearKind::kConv2dBwdFilter: return "conv2d_bwd_filter";
  }
  return "unknown";
}

void ConvShape::validate() const {
  if (B == 0 || m == 0 || n == 0 || C == 0 || r == 0 || s == 0 || D == 0 || stride == 0) {
    throw ShapeError("conv dimensions must be positive");
  }
  if (m + 2 * pad < r || n + 2 * pad < s) throw ShapeError("conv filter larger than input");
  if ((m + 2 * pad - r) % stride != 0 || (n + 2 * pad - s) % stride != 0) {
    throw ShapeError("conv output size is not integral for stride " + std::to_string(stride));
  }
}

BilinearSpec BilinearSpec::elementwise(Shape shape) {
  BilinearSpec s;
  s.kind_ = BilinearKind::kElementwise;
  s.shape_a_ = shape;
  s.shape_b_ = shape;
  s.shape_c_ = std::move(shape);
  return s;
}

BilinearSpec BilinearSpec::scalar_vec(std::size_t rows, std::size_t len) {
  BilinearSpec s;
  s.kind_ = BilinearKind::kScalarVec;
  s.shape_a_ = {rows};
  s.shape_b_ = {rows, len};
  s.shape_c_ = {rows, len};
  return s;
}

BilinearSpec BilinearSpec::matmul(MatmulDims d) {
  BilinearSpec s;
  s.kind_ = BilinearKind::kMatmul;
  s.mm_ = d;
  s.shape_a_ = d.ta ? Shape{d.K, d.M} : Shape{d.M, d.K};
  s.shape_b_ = d.tb ? Shape{d.P, d.K} : Shape{d.K, d.P};
  s.shape_c_ = d.tc ? Shape{d.P, d.M} : Shape{d.M, d.P};
  return s;
}

BilinearSpec BilinearSpec::conv2d_fwd(const ConvShape& g) {
  g.validate();
  BilinearSpec s;
  s.kind_ = BilinearKind::kConv2dFwd;
  s.conv_ = g;
  s.shape_a_ = g.input_shape();
  s.shape_b_ = g.filter_shape();
  s.shape_c_ = g.output_shape();
  return s;
}

BilinearSpec BilinearSpec::conv2d_bwd_input(const ConvShape& g) {
  g.validate();
  BilinearSpec s;
  s.kind_ = BilinearKind::kConv2dBwdInput;
  s.conv_ = g;
  s.shape_a_ = g.output_shape();
  s.shape_b_ = g.filter_shape();
  s.shape_c_ = g.input_shape();
  return s;
}

BilinearSpec BilinearSpec::conv2d_bwd_filter(const ConvShape& g) {
  g.validate();
  BilinearSpec s;
  s.kind_ = BilinearKind::kConv2dBwdFilter;
  s.conv_ = g;
  s.shape_a_ = g.output_shape();
  s.shape_b_ = g.input_shape();
  s.shape_c_ = g.filter_shape();
  return s;
}

std::string BilinearSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind_) << " " << shape_str(shape_a_) << " x " << shape_str(shape_b_)
     << " -> " << shape_str(shape_c_);
  return os.str();
}

namespace {

// Kernels accumulate with the natural wraparound of T. For Word that is
// arithmetic mod 2^64, reduced to the ring afterwards.

template <class T>
void k_elementwise(std::size_t len, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < len; ++i) c[i] = a[i] * b[i];
}

template <class T>
void k_scalar_vec(std::size_t rows, std::size_t len, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T x = a[i];
    for (std::size_t j = 0; j < len; ++j) c[i * len + j] = x * b[i * len + j];
  }
}

template <class T>
void k_matmul(const MatmulDims& d, const T* a, const T* b, T* c) {
  const std::size_t M = d.M, K = d.K, P = d.P;
  // Row-major (M, P) accumulator, transposed on store if requested.
  std::vector<T> acc(M * P, T{});
  for (std::size_t i = 0; i < M; ++i) {
    T* row = acc.data() + i * P;
    for (std::size_t k = 0; k < K; ++k) {
      const T x = d.ta ? a[k * M + i] : a[i * K + k];
      if (x == T{}) continue;
      if (!d.tb) {
        const T* brow = b + k * P;
        for (std::size_t j = 0; j < P; ++j) row[j] += x * brow[j];
      } else {
        for (std::size_t j = 0; j < P; ++j) row[j] += x * b[j * K + k];
      }
    }
  }
  if (!d.tc) {
    std::copy(acc.begin(), acc.end(), c);
  } else {
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < P; ++j) c[j * M + i] = acc[i * P + j];
  }
}

// Calls fn(b, i, j, y, x, u, v) for every (output position, filter tap) pair
// that lands inside the unpadded input.
template <class Fn>
void for_each_tap(const ConvShape& g, Fn&& fn) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t b = 0; b < g.B; ++b)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        for (std::size_t u = 0; u < g.r; ++u) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i * g.stride + u) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.m)) continue;
          for (std::size_t v = 0; v < g.s; ++v) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j * g.stride + v) -
                                     static_cast<std::ptrdiff_t>(g.pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.n)) continue;
            fn(b, i, j, static_cast<std::size_t>(y), static_cast<std::size_t>(x), u, v);
          }
        }
}

template <class T>
void k_conv_fwd(const ConvShape& g, const T* in, const T* f, T* out) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), C = g.C, D = g.D;
  std::fill(out, out + g.B * oh * ow * D, T{});
  for_each_tap(g, [&](std::size_t b, std::size_t i, std::size_t j, std::size_t y,
                      std::size_t x, std::size_t u, std::size_t v) {
    T* o = out + ((b * oh + i) * ow + j) * D;
    const T* px = in + ((b * g.m + y) * g.n + x) * C;
    for (std::size_t c = 0; c < C; ++c) {
      const T xv = px[c];
      const T* fr = f + ((c * g.r + u) * g.s + v) * D;
      for (std::size_t d = 0; d < D; ++d) o[d] += xv * fr[d];
    }
  });
}

template <class T>
void k_conv_bwd_input(const ConvShape& g, const T* dz, const T* f, T* dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), C = g.C, D = g.D;
  std::fill(dx, dx + g.B * g.m * g.n * C, T{});
  for_each_tap(g, [&](std::size_t b, std::size_t i, std::size_t j, std::size_t y,
                      std::size_t x, std::size_t u, std::size_t v) {
    const T* gz = dz + ((b * oh + i) * ow + j) * D;
    T* px = dx + ((b * g.m + y) * g.n + x) * C;
    for (std::size_t c = 0; c < C; ++c) {
      const T* fr = f + ((c * g.r + u) * g.s + v) * D;
      T acc{};
      for (std::size_t d = 0; d < D; ++d) acc += gz[d] * fr[d];
      px[c] += acc;
    }
  });
}

template <class T>
void k_conv_bwd_filter(const ConvShape& g, const T* dz, const T* in, T* df) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), C = g.C, D = g.D;
  std::fill(df, df + C * g.r * g.s * D, T{});
  for_each_tap(g, [&](std::size_t b, std::size_t i, std::size_t j, std::size_t y,
                      std::size_t x, std::size_t u, std::size_t v) {
    const T* gz = dz + ((b * oh + i) * ow + j) * D;
    const T* px = in + ((b * g.m + y) * g.n + x) * C;
    for (std::size_t c = 0; c < C; ++c) {
      const T xv = px[c];
      T* fr = df + ((c * g.r + u) * g.s + v) * D;
      for (std::size_t d = 0; d < D; ++d) fr[d] += xv * gz[d];
    }
  });
}

template <class T>
void dispatch(const BilinearSpec& s, const T* a, const T* b, T* c) {
  switch (s.kind()) {
    case BilinearKind::kElementwise: k_elementwise(s.size_c(), a, b, c); break;
    case BilinearKind::kScalarVec: k_scalar_vec(s.shape_b()[0], s.shape_b()[1], a, b, c); break;
    case BilinearKind::kMatmul: k_matmul(s.mm(), a, b, c); break;
    case BilinearKind::kConv2dFwd: k_conv_fwd(s.conv(), a, b, c); break;
    case BilinearKind::kConv2dBwdInput: k_conv_bwd_input(s.conv(), a, b, c); break;
    case BilinearKind::kConv2dBwdFilter: k_conv_bwd_filter(s.conv(), a, b, c); break;
  }
}

void check_operands(const BilinearSpec& s, const Shape& a, const Shape& b) {
  if (numel(a) != s.size_a() || numel(b) != s.size_b()) {
    throw ShapeError(s.describe() + ": got operands " + shape_str(a) + " and " + shape_str(b));
  }
}

}  // namespace

FixedTensor eval(const BilinearSpec& spec, const FixedTensor& a, const FixedTensor& b,
                 const RingParams& p) {
  if (a.shape() != spec.shape_a() || b.shape() != spec.shape_b()) {
    throw ShapeError(spec.describe() + ": got operands " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  FixedTensor c(spec.shape_c(), a.scale() + b.scale());
  dispatch<Word>(spec, a.words().data(), b.words().data(), c.words().data());
  if (p.n != 64) {
    for (auto& w : c.words()) w = reduce(w, p);
  }
  return c;
}

std::vector<double> eval_real(const BilinearSpec& spec, std::span<const double> a,
                              std::span<const double> b) {
  check_operands(spec, {a.size()}, {b.size()});
  std::vector<double> c(spec.size_c());
  dispatch<double>(spec, a.data(), b.data(), c.data());
  return c;
}

std::pair<BilinearSpec, BilinearSpec> backward_specs(const BilinearSpec& fwd) {
  switch (fwd.kind()) {
    case BilinearKind::kMatmul: {
      const auto& d = fwd.mm();
      if (d.ta || d.tb || d.tc) {
        throw ShapeError("backward_specs supports untransposed matmul only");
      }
      // dA (M,K) = dC (M,P) * B^T, dB (K,P) = (dC^T * A)^T.
      auto bi = BilinearSpec::matmul(MatmulDims{d.M, d.P, d.K, false, true, false});
      auto bf = BilinearSpec::matmul(MatmulDims{d.P, d.M, d.K, true, false, true});
      return {bi, bf};
    }
    case BilinearKind::kConv2dFwd:
      return {BilinearSpec::conv2d_bwd_input(fwd.conv()),
              BilinearSpec::conv2d_bwd_filter(fwd.conv())};
    default:
      throw ShapeError("backward_specs: unsupported kind " + to_string(fwd.kind()));
  }
}

}  // namespace bmpc
