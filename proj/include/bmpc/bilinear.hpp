#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "bmpc/ring.hpp"

namespace bmpc {

enum class BilinearKind {
  kElementwise,
  kScalarVec,
  kMatmul,
  kConv2dFwd,
  kConv2dBwdInput,
  kConv2dBwdFilter,
};

std::string to_string(BilinearKind k);

// NHWC input (B, m, n, C), filter (C, r, s, D), output (B, m', n', D).
struct ConvShape {
  std::size_t B = 1, m = 1, n = 1, C = 1, r = 1, s = 1, D = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  // Throws ShapeError when the output size is not integral or is empty.
  void validate() const;
  std::size_t out_h() const { return (m + 2 * pad - r) / stride + 1; }
  std::size_t out_w() const { return (n + 2 * pad - s) / stride + 1; }

  Shape input_shape() const { return {B, m, n, C}; }
  Shape filter_shape() const { return {C, r, s, D}; }
  Shape output_shape() const { return {B, out_h(), out_w(), D}; }

  bool operator==(const ConvShape&) const = default;
};

// Matmul computes op(A) * op(B) with op(A) of logical shape (M, K) and op(B)
// of logical shape (K, P). ta/tb mean the operand is stored transposed; tc
// stores the (M, P) result transposed as (P, M).
struct MatmulDims {
  std::size_t M = 1, K = 1, P = 1;
  bool ta = false, tb = false, tc = false;
  bool operator==(const MatmulDims&) const = default;
};

class BilinearSpec {
 public:
  static BilinearSpec elementwise(Shape shape);
  // a has shape (R), b has shape (R, L); c[i, j] = a[i] * b[i, j].
  static BilinearSpec scalar_vec(std::size_t rows, std::size_t len);
  static BilinearSpec matmul(MatmulDims dims);
  static BilinearSpec matmul(std::size_t M, std::size_t K, std::size_t P) {
    return matmul(MatmulDims{M, K, P});
  }
  static BilinearSpec conv2d_fwd(const ConvShape& g);
  // (dZ, filter) -> dX
  static BilinearSpec conv2d_bwd_input(const ConvShape& g);
  // (dZ, input) -> dFilter
  static BilinearSpec conv2d_bwd_filter(const ConvShape& g);

  BilinearKind kind() const { return kind_; }
  const Shape& shape_a() const { return shape_a_; }
  const Shape& shape_b() const { return shape_b_; }
  const Shape& shape_c() const { return shape_c_; }
  const ConvShape& conv() const { return conv_; }
  const MatmulDims& mm() const { return mm_; }
  std::size_t size_a() const { return numel(shape_a_); }
  std::size_t size_b() const { return numel(shape_b_); }
  std::size_t size_c() const { return numel(shape_c_); }

  std::string describe() const;
  bool operator==(const BilinearSpec&) const = default;

 private:
  BilinearKind kind_ = BilinearKind::kElementwise;
  Shape shape_a_, shape_b_, shape_c_;
  ConvShape conv_;
  MatmulDims mm_;
};

// Exact ring evaluation; output scale is a.scale() + b.scale().
FixedTensor eval(const BilinearSpec& spec, const FixedTensor& a, const FixedTensor& b,
                 const RingParams& p);

// Same map over doubles, used by float trainers and finite differences.
std::vector<double> eval_real(const BilinearSpec& spec, std::span<const double> a,
                              std::span<const double> b);

// (backward-input spec, backward-parameter spec) for matmul and conv2d_fwd.
// For matmul C = A * B: first is (dC, B) -> dA, second is (dC, A) -> dB.
std::pair<BilinearSpec, BilinearSpec> backward_specs(const BilinearSpec& fwd);

}  // namespace bmpc
