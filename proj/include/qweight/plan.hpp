// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qweight/types.hpp"

namespace qweight {

inline constexpr uint32_t kPadChannel = 0xFFFFFFFFu;
inline constexpr uint32_t kGroupSize = 16;   // first-order group g1
inline constexpr uint32_t kTileChannels = 64;
inline constexpr uint32_t kTileTwoBit = 48;  // 2-bit channels per tile
inline constexpr uint32_t kTileFourBit = 16; // 4-bit channels per tile
inline constexpr uint32_t kMaxPackedChannels = 65536; // col_ind is u16

// Calibrated per-input-channel amplitude, amp[i] = sum_j W[j][i]^2 / H[i]^2,
// accumulated in double.
struct AmplitudeProfile {
  std::vector<double> amp;
};

AmplitudeProfile compute_amplitudes(const WeightMatrix& w,
                                    const CalibrationVector& h);

// Channel split + permutation. Permuted layout is
//   [ 2-bit channels asc | zero pads | 4-bit channels asc ]
// with the 2-bit side padded to a multiple of 48 so tiles line up.
struct ChannelPlan {
  uint32_t in_channels = 0;
  uint32_t n4 = 0;   // 4-bit channels, multiple of 16
  uint32_t pad2 = 0; // pads appended to the 2-bit side
  std::vector<uint8_t> bits;  // per original channel: 2 or 4
  std::vector<uint32_t> perm; // permuted slot -> original channel or kPadChannel

  uint32_t n2() const { return in_channels - n4; }
  uint32_t n2_padded() const { return n2() + pad2; }
  uint32_t padded_channels() const { return n2_padded() + n4; }
  bool operator==(const ChannelPlan&) const = default;
};

// n4 = alpha * IC rounded to the nearest multiple of 16 (ties up); the top-n4
// channels by amplitude (ties broken toward lower index) go to the 4-bit side.
ChannelPlan build_plan(const AmplitudeProfile& amp, double alpha);

// x (length IC, original order) -> padded permuted vector, pads read 0.
std::vector<float> apply_permutation(std::span<const float> x,
                                     const ChannelPlan& plan);
// inverse: padded permuted vector -> length IC original order
std::vector<float> invert_permutation(std::span<const float> xp,
                                      const ChannelPlan& plan);

// rows x padded_channels copy of W with columns permuted, pad columns zero
WeightMatrix permute_matrix(const WeightMatrix& w, const ChannelPlan& plan);

void validate_plan(const ChannelPlan& plan); // throws Error on malformed plans

} // namespace qweight
