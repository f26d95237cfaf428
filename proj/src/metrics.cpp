// SPDX-License-Identifier: Apache-2.0
#include "qweight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "qweight/engine.hpp"
#include "qweight/fp16.hpp"

namespace qweight {

double avg_bit_1order(int n, int g1) {
  if (n < 1 || g1 < 1)
    throw Error("avg_bit_1order: bad arguments");
  return (double)n + (double)(n + 16) / (double)g1;
}

double avg_bit_2order(int n, int n2, int g1, int g2) {
  if (n < 1 || n2 < 1 || g1 < 1 || g2 < 1)
    throw Error("avg_bit_2order: bad arguments");
  return (double)n + (double)(n + n2) / (double)g1 +
         (double)(n2 + 16) / ((double)g1 * (double)g2);
}

double avg_bit_mixed(double alpha, int n2, int g1, int g2) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error("avg_bit_mixed: alpha must lie in [0, 1]");
  return alpha * avg_bit_2order(2, n2, g1, g2) + (1.0 - alpha) * 4.0;
}

double outlier_overhead(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw Error("outlier_overhead: ratio must lie in [0, 1]");
  return (16.0 + 16.0 - 2.0) * ratio;
}

double BitReport::component_sum() const {
  double s = 0.0;
  for (const BitComponent& c : components)
    s += c.bits_per_weight;
  return s;
}

BitReport storage_bits_actual(const PackedLayer& layer) {
  const LayerConfig& cfg = layer.cfg;
  BitReport rep;
  rep.weight_count = (uint64_t)cfg.rows * cfg.cols;
  const auto add = [&](const char* name, uint64_t bytes) {
    BitComponent c;
    c.name = name;
    c.bits = bytes * 8;
    c.bits_per_weight = (double)c.bits / (double)rep.weight_count;
    rep.total_bits += c.bits;
    rep.components.push_back(std::move(c));
  };
  add("codes.main", layer.main.size());
  add("codes.tail2", layer.tail2.size());
  add("codes.tail4", layer.tail4.size());
  add("codes.secondary", layer.secondary.size());
  add("meta", layer.meta.size() * 2);
  add("params.sorder", layer.sorder.size() * 3);
  add("params.fourbit", layer.fourbit.size() * 3);
  // row pointers exist in the container only when outliers do
  add("csr.row_ptr", layer.csr.nnz() ? layer.csr.row_ptr.size() * 4 : 0);
  add("csr.col_ind", layer.csr.col_ind.size() * 2);
  add("csr.values", layer.csr.values.size() * 2);
  rep.actual_container_bit = (double)rep.total_bits / (double)rep.weight_count;
  rep.formula_bit_1order = avg_bit_1order(cfg.n, cfg.group1);
  rep.formula_bit_2order = avg_bit_2order(cfg.n, cfg.n2, cfg.group1, cfg.group2);
  const double two_bit_frac =
      (double)(cfg.cols - cfg.n4) / (double)cfg.cols;
  rep.formula_bit_mixed =
      avg_bit_mixed(two_bit_frac, cfg.n2, cfg.group1, cfg.group2);
  rep.outlier_overhead_bit = outlier_overhead((double)cfg.outlier_ratio);
  return rep;
}

std::string BitReport::to_string() const {
  char buf[160];
  std::string out;
  std::snprintf(buf, sizeof(buf), "weights: %llu\n",
                (unsigned long long)weight_count);
  out += buf;
  std::snprintf(buf, sizeof(buf), "formula_bit_1order:   %.8f\n",
                formula_bit_1order);
  out += buf;
  std::snprintf(buf, sizeof(buf), "formula_bit_2order:   %.8f\n",
                formula_bit_2order);
  out += buf;
  std::snprintf(buf, sizeof(buf), "formula_bit_mixed:    %.8f\n",
                formula_bit_mixed);
  out += buf;
  std::snprintf(buf, sizeof(buf), "outlier_overhead_bit: %.8f\n",
                outlier_overhead_bit);
  out += buf;
  std::snprintf(buf, sizeof(buf), "actual_container_bit: %.8f\n",
                actual_container_bit);
  out += buf;
  for (const BitComponent& c : components) {
    std::snprintf(buf, sizeof(buf), "  %-16s %12llu bits  %.8f b/w\n",
                  c.name.c_str(), (unsigned long long)c.bits,
                  c.bits_per_weight);
    out += buf;
  }
  return out;
}

void BitReport::write_csv(std::ostream& os) const {
  os << "component,bits_per_weight\n";
  char buf[128];
  for (const BitComponent& c : components) {
    std::snprintf(buf, sizeof(buf), "%s,%.10f\n", c.name.c_str(),
                  c.bits_per_weight);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "total_actual,%.10f\n", actual_container_bit);
  os << buf;
  std::snprintf(buf, sizeof(buf), "formula_1order,%.10f\n", formula_bit_1order);
  os << buf;
  std::snprintf(buf, sizeof(buf), "formula_2order,%.10f\n", formula_bit_2order);
  os << buf;
  std::snprintf(buf, sizeof(buf), "formula_mixed,%.10f\n", formula_bit_mixed);
  os << buf;
  std::snprintf(buf, sizeof(buf), "outlier_overhead,%.10f\n",
                outlier_overhead_bit);
  os << buf;
}

ErrorReport quant_error_stats(const WeightMatrix& w, const PackedLayer& layer) {
  const LayerConfig& cfg = layer.cfg;
  if (!w.valid() || w.rows != cfg.rows || w.cols != cfg.cols)
    throw Error("quant_error_stats: dimension mismatch");
  const WeightMatrix wp = permute_matrix(w, layer.plan);
  WeightMatrix recon = reconstruct_dense(layer);
  for (size_t r = 0; r + 1 < layer.csr.row_ptr.size(); ++r)
    for (uint32_t i = layer.csr.row_ptr[r]; i < layer.csr.row_ptr[r + 1]; ++i)
      recon.at((uint32_t)r, layer.csr.col_ind[i]) +=
          f16_to_f32(layer.csr.values[i]);

  ErrorReport rep;
  const uint32_t groups = cfg.padded_cols() / kGroupSize;
  double layer_se = 0.0;
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    for (uint32_t g = 0; g < groups; ++g) {
      double se = 0.0;
      double mabs = 0.0;
      uint32_t real = 0;
      for (uint32_t k = 0; k < kGroupSize; ++k) {
        const uint32_t c = g * kGroupSize + k;
        if (layer.plan.perm[c] == kPadChannel)
          continue;
        real++;
        const double e = (double)recon.at(r, c) - (double)wp.at(r, c);
        se += e * e;
        mabs = std::max(mabs, std::fabs(e));
      }
      if (real == 0)
        continue;
      layer_se += se;
      rep.layer.max_abs = std::max(rep.layer.max_abs, mabs);
      rep.groups.push_back({r, g, se / real, mabs});
    }
  }
  rep.layer.mse = layer_se / ((double)cfg.rows * (double)cfg.cols);
  return rep;
}

void ErrorReport::write_csv(std::ostream& os) const {
  os << "scope,mse,max_abs_err\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "layer,%.12g,%.12g\n", layer.mse,
                layer.max_abs);
  os << buf;
  for (const GroupErrorRow& g : groups) {
    std::snprintf(buf, sizeof(buf), "r%u_g%u,%.12g,%.12g\n", g.row, g.group,
                  g.mse, g.max_abs);
    os << buf;
  }
}

RangeReport group_range_report(const WeightMatrix& w, const ChannelPlan& plan,
                               uint32_t g1) {
  validate_plan(plan);
  if (g1 == 0 || plan.padded_channels() % g1 != 0)
    throw Error("group_range_report: group size must divide padded channels");
  if (!w.valid() || w.cols != plan.in_channels)
    throw Error("group_range_report: dimension mismatch");
  const WeightMatrix wp = permute_matrix(w, plan);
  RangeReport rep;
  const uint32_t groups = wp.cols / g1;
  rep.rows.reserve((size_t)wp.rows * groups);
  for (uint32_t r = 0; r < wp.rows; ++r)
    for (uint32_t g = 0; g < groups; ++g) {
      float mn = wp.at(r, g * g1);
      float mx = mn;
      for (uint32_t k = 1; k < g1; ++k) {
        const float v = wp.at(r, g * g1 + k);
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      rep.rows.push_back({r, g, mn, mx, mx - mn});
    }
  return rep;
}

std::vector<uint64_t> RangeReport::histogram(int bins) const {
  if (bins < 1)
    throw Error("histogram: need at least one bin");
  std::vector<uint64_t> h((size_t)bins, 0);
  float top = 0.0f;
  for (const GroupRangeRow& r : rows)
    top = std::max(top, r.range);
  if (top == 0.0f) {
    h[0] = rows.size();
    return h;
  }
  for (const GroupRangeRow& r : rows) {
    int b = (int)((double)r.range / (double)top * bins);
    if (b >= bins)
      b = bins - 1;
    h[(size_t)b]++;
  }
  return h;
}

void RangeReport::write_csv(std::ostream& os) const {
  os << "row,group,min,max,range\n";
  char buf[160];
  for (const GroupRangeRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%u,%u,%.9g,%.9g,%.9g\n", r.row, r.group,
                  r.min, r.max, r.range);
    os << buf;
  }
}

} // namespace qweight
