// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "qweight/bitpack.hpp"
#include "qweight/outliers.hpp"
#include "qweight/plan.hpp"
#include "qweight/types.hpp"

namespace qweight {

struct QuantizeParams {
  double alpha = 0.25;
  uint32_t group2 = 16;
  double outlier_ratio = 0.002;
};

// Full pipeline: amplitudes -> plan -> outlier split -> group quantization ->
// 2-order scale quantization -> pack.
PackedLayer quantize_layer(const WeightMatrix& w, const CalibrationVector& h,
                           const QuantizeParams& params);

// Same pipeline with plan and outlier positions fixed from the outside
// (the verify path recomputes everything derivable and compares).
PackedLayer quantize_with_plan(const WeightMatrix& w, const ChannelPlan& plan,
                               const QuantizeParams& params,
                               std::span<const SlotRef> outlier_slots);

// Group + 2-order quantization of an already permuted dense matrix whose
// outlier slots hold 0. outlier_mask (rows x padded cols, nonzero = outlier)
// excludes those slots from the refit; empty means no outliers.
LayerGroups quantize_groups(const WeightMatrix& wp, const LayerConfig& cfg,
                            std::span<const uint8_t> outlier_mask = {});

} // namespace qweight
