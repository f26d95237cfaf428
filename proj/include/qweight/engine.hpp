// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qweight/bitpack.hpp"
#include "qweight/types.hpp"

namespace qweight {

// Stage buckets follow the four dequant phases: 1 param fetch, 2 first-order
// scale reconstruction, 3 code unpack + dequantize, 4 multiply/accumulate
// (the per-row reduce is folded into 4). Timed at row granularity so the
// overhead is identical for both execution paths.
struct MatvecResult {
  std::vector<float> y;
  std::array<uint64_t, 4> stage_ns{};
  uint64_t wall_ns = 0;
};

// permuted-order dense weights, rows x padded_cols; outlier slots are 0
WeightMatrix reconstruct_dense(const PackedLayer& layer);

// y[r] = sum over permuted channels ascending of w * x', one sequential f32
// accumulator per row, then the CSR contribution columns ascending.
// x is in original channel order, length cols.
MatvecResult matvec_oracle(const PackedLayer& layer, std::span<const float> x);

// Bit-identical to the oracle: rows are partitioned across workers and each
// worker runs a two-slot tile prefetch; neither changes accumulation order.
MatvecResult matvec_pipelined(const PackedLayer& layer, std::span<const float> x,
                              unsigned workers);

// f64 accumulation over reconstruct_dense + CSR, for oracle comparisons
std::vector<double> matvec_reference_f64(const PackedLayer& layer,
                                         std::span<const float> x);

struct BenchReport {
  uint32_t rows = 0;
  uint32_t cols = 0;
  double avg_bit = 0.0;
  unsigned workers = 1;
  int repetitions = 0;
  uint64_t oracle_wall_ns = 0;    // summed over repetitions
  uint64_t pipelined_wall_ns = 0; // summed over repetitions
  uint64_t oracle_best_ns = 0;    // fastest single repetition
  uint64_t pipelined_best_ns = 0; // fastest single repetition
  std::array<uint64_t, 4> oracle_stage_ns{};
  std::array<uint64_t, 4> pipelined_stage_ns{};
  // wall-time ratio of the best observed repetition of each mode; scheduler
  // interference only ever adds time, so best-of-N estimates the true cost
  double ratio() const {
    return oracle_best_ns ? (double)pipelined_best_ns / (double)oracle_best_ns
                          : 0.0;
  }
  double gflops(uint64_t wall) const;
  double tokens_per_s() const;
  uint64_t bytes_touched = 0; // packed payload + activation + output, per pass
  static const char* csv_header();
  std::string to_csv() const; // header + one row per mode
};

// repetitions must be >= 1; the two modes alternate so machine noise lands
// on both, walls accumulate per mode and the best single runs are kept
BenchReport bench_matvec(const PackedLayer& layer, std::span<const float> x,
                         int repetitions, unsigned workers);

} // namespace qweight
