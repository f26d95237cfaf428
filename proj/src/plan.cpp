// SPDX-License-Identifier: Apache-2.0
#include "qweight/plan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qweight {

AmplitudeProfile compute_amplitudes(const WeightMatrix& w,
                                    const CalibrationVector& h) {
  if (!w.valid() || w.rows == 0 || w.cols == 0)
    throw Error("compute_amplitudes: malformed weight matrix");
  if (h.h.size() != w.cols)
    throw Error("compute_amplitudes: calibration length != input channels");
  for (float v : h.h)
    if (!(v > 0.0f) || !std::isfinite(v))
      throw Error("compute_amplitudes: calibration entries must be positive");
  AmplitudeProfile out;
  out.amp.assign(w.cols, 0.0);
  for (uint32_t r = 0; r < w.rows; ++r) {
    const float* row = w.data.data() + (size_t)r * w.cols;
    for (uint32_t c = 0; c < w.cols; ++c) {
      const double dw = row[c];
      const double dh = h.h[c];
      out.amp[c] += (dw * dw) / (dh * dh);
    }
  }
  return out;
}

ChannelPlan build_plan(const AmplitudeProfile& amp, double alpha) {
  const size_t ic = amp.amp.size();
  if (ic == 0 || ic % kGroupSize != 0)
    throw Error("build_plan: channel count must be a positive multiple of 16");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error("build_plan: alpha must lie in [0, 1]");

  // nearest multiple of 16, ties rounding up
  uint32_t n4 = 16u * (uint32_t)std::floor(alpha * (double)ic / 16.0 + 0.5);
  if (n4 > ic)
    n4 = (uint32_t)ic;

  std::vector<uint32_t> order(ic);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (amp.amp[a] != amp.amp[b])
      return amp.amp[a] > amp.amp[b];
    return a < b;
  });

  ChannelPlan plan;
  plan.in_channels = (uint32_t)ic;
  plan.n4 = n4;
  plan.bits.assign(ic, 2);
  std::vector<uint32_t> four(order.begin(), order.begin() + n4);
  std::sort(four.begin(), four.end());
  for (uint32_t c : four)
    plan.bits[c] = 4;

  const uint32_t n2 = (uint32_t)ic - n4;
  plan.pad2 = (kTileTwoBit - n2 % kTileTwoBit) % kTileTwoBit;
  if ((uint64_t)n2 + plan.pad2 + n4 > kMaxPackedChannels)
    throw Error("build_plan: padded channel count exceeds 65536");

  plan.perm.reserve(plan.padded_channels());
  for (uint32_t c = 0; c < ic; ++c)
    if (plan.bits[c] == 2)
      plan.perm.push_back(c);
  plan.perm.insert(plan.perm.end(), plan.pad2, kPadChannel);
  plan.perm.insert(plan.perm.end(), four.begin(), four.end());
  return plan;
}

void validate_plan(const ChannelPlan& plan) {
  if (plan.in_channels == 0 || plan.in_channels % kGroupSize != 0)
    throw Error("plan: channel count must be a positive multiple of 16");
  if (plan.n4 > plan.in_channels || plan.n4 % kTileFourBit != 0)
    throw Error("plan: bad 4-bit channel count");
  if (plan.pad2 != (kTileTwoBit - plan.n2() % kTileTwoBit) % kTileTwoBit)
    throw Error("plan: bad pad count");
  if (plan.padded_channels() > kMaxPackedChannels)
    throw Error("plan: padded channel count exceeds 65536");
  if (plan.bits.size() != plan.in_channels ||
      plan.perm.size() != plan.padded_channels())
    throw Error("plan: field sizes inconsistent");
  std::vector<uint8_t> seen(plan.in_channels, 0);
  for (uint32_t slot = 0; slot < plan.perm.size(); ++slot) {
    const uint32_t c = plan.perm[slot];
    const bool pad_region = slot >= plan.n2() && slot < plan.n2_padded();
    if (c == kPadChannel) {
      if (!pad_region)
        throw Error("plan: pad channel outside pad region");
      continue;
    }
    if (pad_region || c >= plan.in_channels || seen[c]++)
      throw Error("plan: permutation is not a bijection");
    const uint8_t want = slot < plan.n2() ? 2 : 4;
    if (plan.bits[c] != want)
      throw Error("plan: bits[] disagrees with permutation regions");
  }
  for (uint32_t c = 0; c < plan.in_channels; ++c)
    if (!seen[c])
      throw Error("plan: permutation is not a bijection");
}

std::vector<float> apply_permutation(std::span<const float> x,
                                     const ChannelPlan& plan) {
  if (x.size() != plan.in_channels)
    throw Error("apply_permutation: length mismatch");
  std::vector<float> out(plan.padded_channels(), 0.0f);
  for (uint32_t slot = 0; slot < out.size(); ++slot)
    if (plan.perm[slot] != kPadChannel)
      out[slot] = x[plan.perm[slot]];
  return out;
}

std::vector<float> invert_permutation(std::span<const float> xp,
                                      const ChannelPlan& plan) {
  if (xp.size() != plan.padded_channels())
    throw Error("invert_permutation: length mismatch");
  std::vector<float> out(plan.in_channels, 0.0f);
  for (uint32_t slot = 0; slot < xp.size(); ++slot)
    if (plan.perm[slot] != kPadChannel)
      out[plan.perm[slot]] = xp[slot];
  return out;
}

WeightMatrix permute_matrix(const WeightMatrix& w, const ChannelPlan& plan) {
  if (!w.valid() || w.cols != plan.in_channels)
    throw Error("permute_matrix: dimension mismatch");
  WeightMatrix out;
  out.rows = w.rows;
  out.cols = plan.padded_channels();
  out.data.assign((size_t)out.rows * out.cols, 0.0f);
  for (uint32_t r = 0; r < w.rows; ++r) {
    const float* src = w.data.data() + (size_t)r * w.cols;
    float* dst = out.data.data() + (size_t)r * out.cols;
    for (uint32_t slot = 0; slot < out.cols; ++slot)
      if (plan.perm[slot] != kPadChannel)
        dst[slot] = src[plan.perm[slot]];
  }
  return out;
}

} // namespace qweight
