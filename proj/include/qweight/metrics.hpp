// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qweight/bitpack.hpp"
#include "qweight/types.hpp"

namespace qweight {

// closed-form average-bit accounting
double avg_bit_1order(int n, int g1);                       // N + (N+16)/g1
double avg_bit_2order(int n, int n2, int g1, int g2);       // + (N2+16)/(g1 g2)
double avg_bit_mixed(double alpha, int n2, int g1, int g2); // alpha blend vs 4-bit
double outlier_overhead(double ratio);                      // 30 * ratio

struct BitComponent {
  std::string name;
  uint64_t bits = 0;
  double bits_per_weight = 0.0;
};

struct BitReport {
  double formula_bit_1order = 0.0;
  double formula_bit_2order = 0.0;
  double formula_bit_mixed = 0.0;
  double outlier_overhead_bit = 0.0;
  double actual_container_bit = 0.0;
  uint64_t total_bits = 0;
  uint64_t weight_count = 0; // OC * IC, pads excluded
  std::vector<BitComponent> components;
  double component_sum() const;
  std::string to_string() const;
  void write_csv(std::ostream& os) const; // bits.csv: component,bits_per_weight
};

// true container payload accounting; components sum exactly to the total
BitReport storage_bits_actual(const PackedLayer& layer);

// error statistics against the full (dense + sparse) reconstruction,
// pads excluded, denominator rows * cols
struct ErrorStats {
  double mse = 0.0;
  double max_abs = 0.0;
};
struct GroupErrorRow {
  uint32_t row = 0;
  uint32_t group = 0; // 16-channel group index in permuted order
  double mse = 0.0;
  double max_abs = 0.0;
};
struct ErrorReport {
  ErrorStats layer;
  std::vector<GroupErrorRow> groups; // all-pad groups omitted
  void write_csv(std::ostream& os) const; // error_stats.csv
};
ErrorReport quant_error_stats(const WeightMatrix& w, const PackedLayer& layer);

// per-group (max - min) over the permuted, padded geometry the fits see
struct GroupRangeRow {
  uint32_t row = 0;
  uint32_t group = 0;
  float min = 0.0f;
  float max = 0.0f;
  float range = 0.0f;
};
struct RangeReport {
  std::vector<GroupRangeRow> rows;
  std::vector<uint64_t> histogram(int bins) const;
  void write_csv(std::ostream& os) const; // group_range.csv
};
RangeReport group_range_report(const WeightMatrix& w, const ChannelPlan& plan,
                               uint32_t g1);

} // namespace qweight
