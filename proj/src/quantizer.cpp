// SPDX-License-Identifier: Apache-2.0
#include "qweight/quantizer.hpp"

#include <array>
#include <cmath>

#include "qweight/quant.hpp"

namespace qweight {

namespace {

void check_params(const QuantizeParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0))
    throw Error("quantize: alpha must lie in [0, 1]");
  if (p.group2 == 0)
    throw Error("quantize: group2 must be positive");
  if (!(p.outlier_ratio >= 0.0 && p.outlier_ratio <= 1.0))
    throw Error("quantize: outlier ratio must lie in [0, 1]");
}

LayerConfig make_config(const WeightMatrix& w, const ChannelPlan& plan,
                        const QuantizeParams& p, uint32_t outlier_count) {
  LayerConfig cfg;
  cfg.group2 = (uint16_t)p.group2;
  cfg.rows = w.rows;
  cfg.cols = w.cols;
  cfg.n4 = plan.n4;
  cfg.pad2 = plan.pad2;
  cfg.outlier_count = outlier_count;
  cfg.alpha = (float)p.alpha;
  cfg.outlier_ratio = (float)p.outlier_ratio;
  return cfg;
}

} // namespace

LayerGroups quantize_groups(const WeightMatrix& wp, const LayerConfig& cfg,
                            std::span<const uint8_t> outlier_mask) {
  if (!wp.valid() || wp.rows != cfg.rows || wp.cols != cfg.padded_cols())
    throw Error("quantize_groups: matrix is not in permuted geometry");
  if (!outlier_mask.empty() && outlier_mask.size() != wp.data.size())
    throw Error("quantize_groups: mask size mismatch");
  const uint32_t gpr = cfg.groups_per_row();
  const uint32_t n2p = cfg.n2_padded();

  LayerGroups g;
  g.codes2.resize((size_t)cfg.rows * n2p);
  g.zeros2.resize((size_t)cfg.rows * gpr);
  g.scodes.assign((size_t)cfg.rows * gpr, 0);
  g.sorder.resize(cfg.sorder_count());
  g.codes4.resize((size_t)cfg.rows * cfg.n4);
  g.fourbit.resize(cfg.fourbit_count());

  // first-order fits; 2-bit scales kept in f32 for the second-order pass
  std::vector<float> scales1((size_t)cfg.rows * gpr);
  std::array<float, kGroupSize> keep;
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    const float* row = wp.data.data() + (size_t)r * wp.cols;
    const uint8_t* mrow =
        outlier_mask.empty() ? nullptr
                             : outlier_mask.data() + (size_t)r * wp.cols;
    for (uint32_t j = 0; j < gpr; ++j) {
      const uint32_t base = j * kGroupSize;
      size_t kept = 0;
      for (uint32_t k = 0; k < kGroupSize; ++k)
        if (!mrow || !mrow[base + k])
          keep[kept++] = row[base + k];
      if (kept == 0) { // a fully outlier group degenerates to its zeroed slots
        keep[0] = 0.0f;
        kept = 1;
      }
      const ScaleZero sz = fit_scale_zero({keep.data(), kept}, cfg.n);
      scales1[(size_t)r * gpr + j] = sz.scale;
      g.zeros2[(size_t)r * gpr + j] = sz.zero;
      const std::vector<uint8_t> codes =
          quantize_values({row + base, kGroupSize}, sz.scale, sz.zero, cfg.n);
      std::copy(codes.begin(), codes.end(),
                g.codes2.begin() + (size_t)r * n2p + base);
    }
    for (uint32_t b = 0; b < cfg.blocks4(); ++b) {
      const uint32_t base = n2p + b * kGroupSize;
      const GroupQuant q = quantize_group({row + base, kGroupSize}, cfg.n2);
      g.fourbit[(size_t)r * cfg.blocks4() + b] = {f32_to_f16(q.scale), q.zero};
      std::copy(q.codes.begin(), q.codes.end(),
                g.codes4.begin() + (size_t)r * cfg.n4 + b * kGroupSize);
    }
  }

  // second-order pass down the rows of each group column
  std::vector<float> column(cfg.group2);
  for (uint32_t rb = 0; rb < cfg.row_blocks(); ++rb) {
    const uint32_t r0 = rb * cfg.group2;
    const uint32_t rn = std::min<uint32_t>(cfg.group2, cfg.rows - r0);
    for (uint32_t j = 0; j < gpr; ++j) {
      for (uint32_t i = 0; i < rn; ++i)
        column[i] = scales1[(size_t)(r0 + i) * gpr + j];
      const ScaleQuant2 sq =
          quantize_scales_2order({column.data(), rn}, cfg.n2);
      g.sorder[(size_t)rb * gpr + j] = {sq.zero2, sq.scale2};
      for (uint32_t i = 0; i < rn; ++i) {
        const uint8_t c = sq.codes[i];
        g.scodes[(size_t)(r0 + i) * gpr + j] =
            (j % 3 == 0) ? c : (uint8_t)(c >> 1); // 4/3/3 rule
      }
    }
  }
  return g;
}

PackedLayer quantize_with_plan(const WeightMatrix& w, const ChannelPlan& plan,
                               const QuantizeParams& params,
                               std::span<const SlotRef> outlier_slots) {
  check_params(params);
  if (!w.valid() || w.cols != plan.in_channels)
    throw Error("quantize: dimension mismatch between weights and plan");
  validate_plan(plan);
  const WeightMatrix wp = permute_matrix(w, plan);
  SplitResult split = split_dense_sparse(wp, plan, outlier_slots);
  LayerConfig cfg =
      make_config(w, plan, params, (uint32_t)outlier_slots.size());
  std::vector<uint8_t> mask;
  if (!outlier_slots.empty()) {
    mask.assign(wp.data.size(), 0);
    for (const SlotRef& s : outlier_slots)
      mask[(size_t)s.row * wp.cols + s.col] = 1;
  }
  const LayerGroups groups = quantize_groups(split.dense, cfg, mask);
  return pack_layer(cfg, plan, groups, std::move(split.csr));
}

PackedLayer quantize_layer(const WeightMatrix& w, const CalibrationVector& h,
                           const QuantizeParams& params) {
  check_params(params);
  if (!w.valid() || w.rows == 0)
    throw Error("quantize: malformed weight matrix");
  if (w.cols < kGroupSize || w.cols % kGroupSize != 0)
    throw Error("quantize: cols must be a positive multiple of 16");
  const AmplitudeProfile amp = compute_amplitudes(w, h);
  const ChannelPlan plan = build_plan(amp, params.alpha);
  const WeightMatrix wp = permute_matrix(w, plan);
  const OutlierScores scores = score_outliers(wp, h, plan);
  const uint64_t k = outlier_budget(params.outlier_ratio, w.rows, w.cols);
  const std::vector<SlotRef> sel = select_outliers(scores, k);
  return quantize_with_plan(w, plan, params, sel);
}

} // namespace qweight
