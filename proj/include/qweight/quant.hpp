// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qweight/fp16.hpp"
#include "qweight/types.hpp"

namespace qweight {

struct ScaleZero {
  float scale = 1.0f;
  uint8_t zero = 0;
  bool operator==(const ScaleZero&) const = default;
};

// Asymmetric min/max fit for an N-bit group:
//   s = (max - min) / (2^N - 1),  z = clamp(0, 2^N-1, round(-min / s)).
// Constant groups get an exact-reconstruction scale: s = |v| / (2^N - 1)
// when that value survives the float32 round trip, else s = |v|. A constant
// zero group fits (1, 0). Throws Error on empty or non-finite input.
ScaleZero fit_scale_zero(std::span<const float> values, int bits);

// code = clamp(0, 2^N-1, round(w / s) + z), round half away from zero.
std::vector<uint8_t> quantize_values(std::span<const float> values, float scale,
                                     uint8_t zero, int bits);

inline float dequantize_one(uint8_t code, uint8_t zero, float scale) {
  return (float)((int)code - (int)zero) * scale;
}

std::vector<float> dequantize_values(std::span<const uint8_t> codes, float scale,
                                     uint8_t zero);

// fit + quantize in one call
struct GroupQuant {
  std::vector<uint8_t> codes;
  float scale = 1.0f;
  uint8_t zero = 0;
};
GroupQuant quantize_group(std::span<const float> values, int bits);

// Second-order pass over a column of first-order scales: the scales are
// themselves min/max quantized to N2-bit codes; scale2 is kept as fp16 bits,
// zero2 as a plain byte. Scales are positive so zero2 lands on 0.
struct ScaleQuant2 {
  std::vector<uint8_t> codes;
  uint8_t zero2 = 0;
  uint16_t scale2 = 0; // fp16 bits
};
ScaleQuant2 quantize_scales_2order(std::span<const float> scales, int bits2);

inline float dequantize_scale(uint8_t code, uint8_t zero2, uint16_t scale2) {
  return (float)((int)code - (int)zero2) * f16_to_f32(scale2);
}

} // namespace qweight
