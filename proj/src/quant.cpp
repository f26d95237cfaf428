// SPDX-License-Identifier: Apache-2.0
#include "qweight/quant.hpp"

#include <algorithm>
#include <cmath>

namespace qweight {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 8)
    throw Error("quant: unsupported bit width");
}

} // namespace

ScaleZero fit_scale_zero(std::span<const float> values, int bits) {
  check_bits(bits);
  if (values.empty())
    throw Error("fit_scale_zero: empty group");
  float mn = values[0];
  float mx = values[0];
  for (float v : values) {
    if (!std::isfinite(v))
      throw Error("fit_scale_zero: non-finite value");
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  const float dmax = (float)((1 << bits) - 1);
  if (mn == mx) {
    // constant group: pick a scale that reproduces the value exactly.
    const float v = mn;
    if (v == 0.0f)
      return {1.0f, 0};
    const float av = std::fabs(v);
    const uint8_t z = v > 0.0f ? (uint8_t)0 : (uint8_t)dmax;
    const float s = av / dmax;
    if (s * dmax == av)
      return {s, z}; // v sits on the far end of the code range
    return {av, z};  // fallback: v is one step away from the zero-point
  }
  float s = (mx - mn) / dmax;
  if (!std::isfinite(s))
    throw Error("fit_scale_zero: range overflows float32");
  if (s == 0.0f)
    s = mx - mn; // subnormal range underflowed the division
  const float zq = std::round(-mn / s);
  const uint8_t z =
      zq <= 0.0f ? (uint8_t)0 : (zq >= dmax ? (uint8_t)dmax : (uint8_t)zq);
  return {s, z};
}

std::vector<uint8_t> quantize_values(std::span<const float> values, float scale,
                                     uint8_t zero, int bits) {
  check_bits(bits);
  if (!(scale > 0.0f) || !std::isfinite(scale))
    throw Error("quantize_values: scale must be positive and finite");
  const float dmax = (float)((1 << bits) - 1);
  if ((float)zero > dmax)
    throw Error("quantize_values: zero-point out of range");
  std::vector<uint8_t> codes(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const float c = std::round(values[i] / scale) + (float)zero;
    codes[i] = c <= 0.0f ? (uint8_t)0 : (c >= dmax ? (uint8_t)dmax : (uint8_t)c);
  }
  return codes;
}

std::vector<float> dequantize_values(std::span<const uint8_t> codes, float scale,
                                     uint8_t zero) {
  std::vector<float> out(codes.size());
  for (size_t i = 0; i < codes.size(); ++i)
    out[i] = dequantize_one(codes[i], zero, scale);
  return out;
}

GroupQuant quantize_group(std::span<const float> values, int bits) {
  const ScaleZero sz = fit_scale_zero(values, bits);
  GroupQuant g;
  g.scale = sz.scale;
  g.zero = sz.zero;
  g.codes = quantize_values(values, sz.scale, sz.zero, bits);
  return g;
}

ScaleQuant2 quantize_scales_2order(std::span<const float> scales, int bits2) {
  check_bits(bits2);
  if (scales.empty())
    throw Error("quantize_scales_2order: empty scale column");
  float mx = 0.0f;
  for (float s : scales) {
    if (!(s >= 0.0f) || !std::isfinite(s))
      throw Error("quantize_scales_2order: scales must be non-negative");
    mx = std::max(mx, s);
  }
  // scales are non-negative, so the code range is anchored at zero; fitting
  // [0, max] instead of [min, max] keeps the per-element error within one step
  // even when the smallest scale is far from zero.
  const float anchored[2] = {0.0f, mx};
  const ScaleZero sz = fit_scale_zero(anchored, bits2);
  ScaleQuant2 out;
  out.codes = quantize_values(scales, sz.scale, sz.zero, bits2);
  out.zero2 = sz.zero;
  out.scale2 = f32_to_f16(sz.scale);
  return out;
}

} // namespace qweight
