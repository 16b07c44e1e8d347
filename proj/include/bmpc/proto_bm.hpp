#pragma once

#include <cstdint>
#include <vector>

#include "bmpc/bilinear.hpp"
#include "bmpc/party.hpp"

namespace bmpc {

// Opened mask difference for one operand, kept so a later multiplication that
// shares the operand can skip sending it again. Valid only while the
// operand's shares are unchanged; reuse against a different share is rejected.
class MaskHandle {
 public:
  bool valid() const { return valid_; }
  std::uint64_t stream_id() const { return stream_id_; }
  const Shape& shape() const { return shape_; }
  const FixedTensor& opened() const { return opened_; }

 private:
  friend class BmEngine;
  std::uint64_t stream_id_ = 0;
  Shape shape_;
  FixedTensor opened_;
  FixedTensor snapshot_;
  bool valid_ = false;
};

struct BmRequest {
  BilinearSpec spec;
  const FixedTensor* a = nullptr;
  const FixedTensor* b = nullptr;
  const MaskHandle* reuse_a = nullptr;
  const MaskHandle* reuse_b = nullptr;
};

struct BmOutput {
  FixedTensor c;  // scale = scale(a) + scale(b), no truncation
  MaskHandle mask_a;
  MaskHandle mask_b;
};

// Bilinear beaver multiplication. All requests share one online round.
std::vector<BmOutput> bm_multiply_batch(Party& party, const std::vector<BmRequest>& requests);

BmOutput bm_multiply(Party& party, const BilinearSpec& spec, const FixedTensor& a,
                     const FixedTensor& b, const MaskHandle* reuse_a = nullptr,
                     const MaskHandle* reuse_b = nullptr);

// Closed-form payload bits of one fresh invocation: offline |C| n, online
// 2(|A| + |B|) n.
std::uint64_t bm_closed_form_bits(const BilinearSpec& spec, Phase phase, const RingParams& p);

// The matrix-form baseline: local im2col followed by one matmul triple.
// Supports the three conv kinds.
BilinearSpec im2col_matmul_spec(const BilinearSpec& conv_spec);
std::uint64_t im2col_closed_form_bits(const BilinearSpec& conv_spec, Phase phase,
                                      const RingParams& p);
FixedTensor im2col_baseline_multiply(Party& party, const BilinearSpec& conv_spec,
                                     const FixedTensor& a, const FixedTensor& b);

// Local rearrangements used by the baseline (exposed for tests).
// Forward cols: (B m' n', C r s), column index (c, u, v).
FixedTensor im2col_forward(const ConvShape& g, const FixedTensor& input);
// Full-convolution cols of dZ: (B m n, r s D), column index (u, v, d).
FixedTensor im2col_full(const ConvShape& g, const FixedTensor& dz);
// Filter (C, r, s, D) rearranged to (r s D, C).
FixedTensor filter_to_rsd_c(const ConvShape& g, const FixedTensor& filter);

}  // namespace bmpc
