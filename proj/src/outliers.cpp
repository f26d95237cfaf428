// SPDX-License-Identifier: Apache-2.0
#include "qweight/outliers.hpp"

#include <algorithm>
#include <cmath>

#include "qweight/fp16.hpp"
#include "qweight/quant.hpp"

namespace qweight {

namespace {

struct Candidate {
  double score;
  uint32_t row;
  uint32_t col;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score)
    return a.score > b.score;
  if (a.row != b.row)
    return a.row < b.row;
  return a.col < b.col;
}

// squared requantization residual / H^2 for one g1-sized group, written into
// score at the group's real slots
void score_group(const float* wrow, uint32_t base, int bits,
                 const CalibrationVector& h, const ChannelPlan& plan,
                 double* srow) {
  const std::span<const float> vals(wrow + base, kGroupSize);
  const GroupQuant q = quantize_group(vals, bits);
  for (uint32_t k = 0; k < kGroupSize; ++k) {
    const uint32_t orig = plan.perm[base + k];
    if (orig == kPadChannel)
      continue;
    const double res =
        (double)dequantize_one(q.codes[k], q.zero, q.scale) - (double)vals[k];
    const double dh = h.h[orig];
    srow[base + k] = (res * res) / (dh * dh);
  }
}

std::vector<Candidate> top_k(std::vector<Candidate>&& cands, uint64_t k) {
  std::sort(cands.begin(), cands.end(), better);
  if (cands.size() > k)
    cands.resize(k);
  return std::move(cands);
}

} // namespace

uint64_t outlier_budget(double ratio, uint64_t rows, uint64_t cols) {
  if (!(ratio >= 0.0) || ratio > 1.0)
    throw Error("outlier_budget: ratio must lie in [0, 1]");
  return (uint64_t)std::llround(ratio * (double)(rows * cols));
}

OutlierScores score_outliers(const WeightMatrix& wp, const CalibrationVector& h,
                             const ChannelPlan& plan) {
  validate_plan(plan);
  if (!wp.valid() || wp.cols != plan.padded_channels())
    throw Error("score_outliers: matrix is not in permuted geometry");
  if (h.h.size() != plan.in_channels)
    throw Error("score_outliers: calibration length mismatch");
  OutlierScores out;
  out.rows = wp.rows;
  out.cols = wp.cols;
  out.score.assign((size_t)wp.rows * wp.cols, 0.0);
  for (uint32_t r = 0; r < wp.rows; ++r) {
    const float* wrow = wp.data.data() + (size_t)r * wp.cols;
    double* srow = out.score.data() + (size_t)r * wp.cols;
    for (uint32_t base = 0; base < plan.n2_padded(); base += kGroupSize)
      score_group(wrow, base, 2, h, plan, srow);
  }
  return out;
}

std::vector<SlotRef> select_outliers(const OutlierScores& scores, uint64_t k) {
  std::vector<Candidate> cands;
  for (uint32_t r = 0; r < scores.rows; ++r)
    for (uint32_t c = 0; c < scores.cols; ++c) {
      const double s = scores.at(r, c);
      if (s > 0.0)
        cands.push_back({s, r, c});
    }
  cands = top_k(std::move(cands), k);
  std::vector<SlotRef> sel(cands.size());
  for (size_t i = 0; i < cands.size(); ++i)
    sel[i] = {cands[i].row, cands[i].col};
  std::sort(sel.begin(), sel.end(), [](const SlotRef& a, const SlotRef& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  return sel;
}

SplitResult split_dense_sparse(const WeightMatrix& wp, const ChannelPlan& plan,
                               std::span<const SlotRef> selection) {
  validate_plan(plan);
  if (!wp.valid() || wp.cols != plan.padded_channels())
    throw Error("split_dense_sparse: matrix is not in permuted geometry");
  SplitResult out;
  out.dense = wp;
  out.csr.row_ptr.assign((size_t)wp.rows + 1, 0);
  out.csr.col_ind.reserve(selection.size());
  out.csr.values.reserve(selection.size());
  uint32_t prev_row = 0;
  uint32_t prev_col = 0;
  bool first = true;
  for (const SlotRef& s : selection) {
    if (s.row >= wp.rows || s.col >= plan.n2_padded() ||
        plan.perm[s.col] == kPadChannel)
      throw Error("split_dense_sparse: selected slot outside 2-bit region");
    if (!first && (s.row < prev_row || (s.row == prev_row && s.col <= prev_col)))
      throw Error("split_dense_sparse: selection not sorted by (row, col)");
    first = false;
    prev_row = s.row;
    prev_col = s.col;
    out.csr.row_ptr[s.row + 1]++;
    out.csr.col_ind.push_back((uint16_t)s.col);
    out.csr.values.push_back(f32_to_f16(wp.at(s.row, s.col)));
    out.dense.at(s.row, s.col) = 0.0f;
  }
  for (uint32_t r = 0; r < wp.rows; ++r)
    out.csr.row_ptr[r + 1] += out.csr.row_ptr[r];
  return out;
}

void sparse_matvec(const CsrOutliers& csr, std::span<const float> xp,
                   std::span<float> y) {
  if (csr.row_ptr.size() != y.size() + 1)
    throw Error("sparse_matvec: row count mismatch");
  for (size_t r = 0; r + 1 < csr.row_ptr.size(); ++r) {
    float acc = y[r];
    for (uint32_t i = csr.row_ptr[r]; i < csr.row_ptr[r + 1]; ++i)
      acc += f16_to_f32(csr.values[i]) * xp[csr.col_ind[i]];
    y[r] = acc;
  }
}

OutlierDistribution outlier_distribution_report(const WeightMatrix& wp,
                                                const CalibrationVector& h,
                                                const ChannelPlan& plan,
                                                uint64_t unrestricted_k) {
  validate_plan(plan);
  if (!wp.valid() || wp.cols != plan.padded_channels())
    throw Error("outlier_distribution_report: matrix is not permuted");
  if (h.h.size() != plan.in_channels)
    throw Error("outlier_distribution_report: calibration length mismatch");
  std::vector<Candidate> cands;
  std::vector<double> srow(wp.cols);
  for (uint32_t r = 0; r < wp.rows; ++r) {
    const float* wrow = wp.data.data() + (size_t)r * wp.cols;
    std::fill(srow.begin(), srow.end(), 0.0);
    for (uint32_t base = 0; base < wp.cols; base += kGroupSize)
      score_group(wrow, base, base < plan.n2_padded() ? 2 : 4, h, plan,
                  srow.data());
    for (uint32_t c = 0; c < wp.cols; ++c)
      if (srow[c] > 0.0)
        cands.push_back({srow[c], r, c});
  }
  cands = top_k(std::move(cands), unrestricted_k);
  OutlierDistribution out;
  out.considered = cands.size();
  for (const Candidate& c : cands)
    if (c.col < plan.n2_padded())
      out.in_two_bit++;
    else
      out.in_four_bit++;
  return out;
}

void validate_csr(const CsrOutliers& csr, uint32_t rows, uint32_t padded_cols) {
  if (csr.row_ptr.size() != (size_t)rows + 1 || csr.row_ptr[0] != 0)
    throw Error("csr: row_ptr malformed");
  for (size_t r = 0; r + 1 < csr.row_ptr.size(); ++r) {
    if (csr.row_ptr[r] > csr.row_ptr[r + 1])
      throw Error("csr: row_ptr not monotone");
    for (uint32_t i = csr.row_ptr[r]; i < csr.row_ptr[r + 1]; ++i) {
      if (csr.col_ind[i] >= padded_cols)
        throw Error("csr: column out of range");
      if (i > csr.row_ptr[r] && csr.col_ind[i] <= csr.col_ind[i - 1])
        throw Error("csr: columns not strictly increasing");
    }
  }
  if (csr.col_ind.size() != csr.nnz() || csr.values.size() != csr.nnz())
    throw Error("csr: index/value lengths disagree with row_ptr");
}

} // namespace qweight
