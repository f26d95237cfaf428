// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qweight/plan.hpp"
#include "qweight/types.hpp"

namespace qweight {

// Sparse outliers in CSR over the permuted geometry. col_ind is the permuted
// column (2-bit region only), strictly increasing within a row; values are
// fp16 bits of the original weight.
struct CsrOutliers {
  std::vector<uint32_t> row_ptr; // rows + 1
  std::vector<uint16_t> col_ind;
  std::vector<uint16_t> values;
  uint32_t nnz() const { return row_ptr.empty() ? 0u : row_ptr.back(); }
  bool operator==(const CsrOutliers&) const = default;
};

struct OutlierScores {
  uint32_t rows = 0;
  uint32_t cols = 0; // padded channels
  std::vector<double> score;
  double at(uint32_t r, uint32_t c) const { return score[(size_t)r * cols + c]; }
};

struct SlotRef {
  uint32_t row = 0;
  uint32_t col = 0; // permuted column
  bool operator==(const SlotRef&) const = default;
};

// K = round(ratio * rows * cols), cols counted before padding
uint64_t outlier_budget(double ratio, uint64_t rows, uint64_t cols);

// score = (w - deq(q(w)))^2 / H_i^2 under the baseline per-group 2-bit fit,
// evaluated on real 2-bit slots of the permuted matrix; pads and the 4-bit
// region score 0 and are never selected.
OutlierScores score_outliers(const WeightMatrix& wp, const CalibrationVector& h,
                             const ChannelPlan& plan);

// global top-k by (score desc, row asc, col asc), positive scores only;
// returned sorted by (row, col)
std::vector<SlotRef> select_outliers(const OutlierScores& scores, uint64_t k);

// Dense copy with selected slots zeroed + CSR holding their fp16 values.
struct SplitResult {
  WeightMatrix dense; // permuted, padded
  CsrOutliers csr;
};
SplitResult split_dense_sparse(const WeightMatrix& wp, const ChannelPlan& plan,
                               std::span<const SlotRef> selection);

// y[r] += sum csr(r,c) * xp[c], columns ascending
void sparse_matvec(const CsrOutliers& csr, std::span<const float> xp,
                   std::span<float> y);

// Where would the top-K land if both regions were eligible? Scores the 4-bit
// region with its own 4-bit group fits.
struct OutlierDistribution {
  uint64_t considered = 0;
  uint64_t in_two_bit = 0;
  uint64_t in_four_bit = 0;
  double frac_two_bit() const {
    return considered ? (double)in_two_bit / (double)considered : 0.0;
  }
  double frac_four_bit() const {
    return considered ? (double)in_four_bit / (double)considered : 0.0;
  }
};
OutlierDistribution outlier_distribution_report(const WeightMatrix& wp,
                                                const CalibrationVector& h,
                                                const ChannelPlan& plan,
                                                uint64_t unrestricted_k);

void validate_csr(const CsrOutliers& csr, uint32_t rows, uint32_t padded_cols);

} // namespace qweight
