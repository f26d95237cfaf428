// SPDX-License-Identifier: Apache-2.0
#include "qweight/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include "qweight/container.hpp"
#include "qweight/metrics.hpp"
#include "qweight/quant.hpp"

namespace qweight {

namespace {

inline uint64_t now_ns() {
  return (uint64_t)std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// per-row scratch; the pipelined path keeps two of these as prefetch slots
struct RowScratch {
  std::vector<uint8_t> zeros;  // 3 * triples
  std::vector<uint8_t> scodes; // 3 * triples
  std::vector<float> s1;       // 3 * triples
  std::vector<float> s4;       // blocks4
  std::vector<uint8_t> z4;     // blocks4
  std::vector<float> wbuf;     // padded_cols
  explicit RowScratch(const LayerConfig& cfg)
      : zeros(cfg.groups_per_row()), scodes(cfg.groups_per_row()),
        s1(cfg.groups_per_row()), s4(cfg.blocks4()), z4(cfg.blocks4()),
        wbuf(cfg.padded_cols()) {}
};

// stage 1: meta words and parameter entries pulled into the scratch
void row_fetch_params(const PackedLayer& layer, uint32_t r, RowScratch& s) {
  const uint32_t t2 = layer.cfg.triples();
  for (uint32_t t = 0; t < t2; ++t)
    unpack_meta(meta_at(layer, r, t), {s.zeros.data() + 3 * t, 3},
                {s.scodes.data() + 3 * t, 3});
}

// stage 2: first-order scales from the second order, 4-bit params decoded
void row_compute_scales(const PackedLayer& layer, uint32_t r, RowScratch& s) {
  const LayerConfig& cfg = layer.cfg;
  const uint32_t gpr = cfg.groups_per_row();
  const SorderParam* sp =
      layer.sorder.data() + (size_t)(r / cfg.group2) * gpr;
  for (uint32_t j = 0; j < gpr; ++j) {
    const uint8_t eff =
        (j % 3 == 0) ? s.scodes[j] : (uint8_t)(s.scodes[j] << 1);
    s.s1[j] = dequantize_scale(eff, sp[j].zero2, sp[j].scale2);
  }
  const FourBitParam* fp = layer.fourbit.data() + (size_t)r * cfg.blocks4();
  for (uint32_t b = 0; b < cfg.blocks4(); ++b) {
    s.s4[b] = f16_to_f32(fp[b].scale);
    s.z4[b] = fp[b].zero;
  }
}

// stage 3: codes to weights, 2-bit region then 4-bit region
void row_decode(const PackedLayer& layer, uint32_t r, RowScratch& s) {
  const LayerConfig& cfg = layer.cfg;
  const uint32_t t2 = cfg.triples();
  const uint32_t t4 = cfg.blocks4();
  const uint32_t paired = cfg.paired_tiles();
  float* wb = s.wbuf.data();
  for (uint32_t t = 0; t < t2; ++t) {
    const uint8_t* src =
        t < paired ? layer.main.data() + ((size_t)r * paired + t) * 16
                   : layer.tail2.data() +
                         ((size_t)r * (t2 - paired) + (t - paired)) * 12;
    for (uint32_t sub = 0; sub < 3; ++sub) {
      const float s1 = s.s1[3 * t + sub];
      const int z = s.zeros[3 * t + sub];
      const uint8_t* gb = src + sub * 4;
      float* out = wb + (size_t)t * kTileTwoBit + sub * kGroupSize;
      for (uint32_t byte = 0; byte < 4; ++byte) {
        const uint8_t v = gb[byte];
        out[4 * byte + 0] = (float)(((v >> 0) & 3) - z) * s1;
        out[4 * byte + 1] = (float)(((v >> 2) & 3) - z) * s1;
        out[4 * byte + 2] = (float)(((v >> 4) & 3) - z) * s1;
        out[4 * byte + 3] = (float)(((v >> 6) & 3) - z) * s1;
      }
    }
  }
  for (uint32_t b = 0; b < t4; ++b) {
    const float s4 = s.s4[b];
    const int z4 = s.z4[b];
    const uint8_t* first =
        b < paired ? layer.main.data() + ((size_t)r * paired + b) * 16 + 12
                   : layer.tail4.data() +
                         ((size_t)r * (t4 - paired) + (b - paired)) * 4;
    const uint8_t* second =
        layer.secondary.data() + ((size_t)r * t4 + b) * 4;
    float* out = wb + cfg.n2_padded() + (size_t)b * kTileFourBit;
    for (uint32_t i = 0; i < 4; ++i) {
      out[2 * i + 0] = (float)((first[i] & 15) - z4) * s4;
      out[2 * i + 1] = (float)((first[i] >> 4) - z4) * s4;
      out[8 + 2 * i + 0] = (float)((second[i] & 15) - z4) * s4;
      out[8 + 2 * i + 1] = (float)((second[i] >> 4) - z4) * s4;
    }
  }
}

// stage 4: one sequential f32 accumulator, channels ascending, then CSR
float row_fma(const PackedLayer& layer, uint32_t r, const RowScratch& s,
              const float* xp) {
  const uint32_t cols = layer.cfg.padded_cols();
  float acc = 0.0f;
  const float* wb = s.wbuf.data();
  for (uint32_t c = 0; c < cols; ++c)
    acc += wb[c] * xp[c];
  const CsrOutliers& csr = layer.csr;
  for (uint32_t i = csr.row_ptr[r]; i < csr.row_ptr[r + 1]; ++i)
    acc += f16_to_f32(csr.values[i]) * xp[csr.col_ind[i]];
  return acc;
}

std::vector<float> checked_permute(const PackedLayer& layer,
                                   std::span<const float> x) {
  if (x.size() != layer.cfg.cols)
    throw Error("matvec: activation length != input channels");
  for (float v : x)
    if (!std::isfinite(v))
      throw Error("matvec: non-finite activation");
  return apply_permutation(x, layer.plan);
}

// sequential fetch+scales+decode for one row with stage accounting
inline void decode_row_timed(const PackedLayer& layer, uint32_t r,
                             RowScratch& s, std::array<uint64_t, 4>& ns) {
  const uint64_t t0 = now_ns();
  row_fetch_params(layer, r, s);
  const uint64_t t1 = now_ns();
  row_compute_scales(layer, r, s);
  const uint64_t t2 = now_ns();
  row_decode(layer, r, s);
  const uint64_t t3 = now_ns();
  ns[0] += t1 - t0;
  ns[1] += t2 - t1;
  ns[2] += t3 - t2;
}

} // namespace

WeightMatrix reconstruct_dense(const PackedLayer& layer) {
  validate_layer(layer);
  const LayerConfig& cfg = layer.cfg;
  WeightMatrix out;
  out.rows = cfg.rows;
  out.cols = cfg.padded_cols();
  out.data.resize((size_t)out.rows * out.cols);
  RowScratch s(cfg);
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    row_fetch_params(layer, r, s);
    row_compute_scales(layer, r, s);
    row_decode(layer, r, s);
    std::copy(s.wbuf.begin(), s.wbuf.end(),
              out.data.begin() + (size_t)r * out.cols);
  }
  return out;
}

MatvecResult matvec_oracle(const PackedLayer& layer, std::span<const float> x) {
  const std::vector<float> xp = checked_permute(layer, x);
  MatvecResult res;
  res.y.resize(layer.cfg.rows);
  RowScratch s(layer.cfg);
  const uint64_t w0 = now_ns();
  for (uint32_t r = 0; r < layer.cfg.rows; ++r) {
    decode_row_timed(layer, r, s, res.stage_ns);
    const uint64_t t0 = now_ns();
    res.y[r] = row_fma(layer, r, s, xp.data());
    res.stage_ns[3] += now_ns() - t0;
  }
  res.wall_ns = now_ns() - w0;
  return res;
}

MatvecResult matvec_pipelined(const PackedLayer& layer,
                              std::span<const float> x, unsigned workers) {
  if (workers == 0)
    throw Error("matvec_pipelined: workers must be >= 1");
  const std::vector<float> xp = checked_permute(layer, x);
  const uint32_t rows = layer.cfg.rows;
  if (workers > rows)
    workers = rows;

  MatvecResult res;
  res.y.resize(rows);
  std::vector<std::array<uint64_t, 4>> stage(workers, std::array<uint64_t, 4>{});
  std::vector<std::exception_ptr> errors(workers);
  // scratch lives outside the timed wall, as the oracle's scratch does
  std::vector<RowScratch> slots;
  slots.reserve(2 * (size_t)workers);
  for (unsigned wi = 0; wi < 2 * workers; ++wi)
    slots.emplace_back(layer.cfg);

  // contiguous row ranges; each worker interleaves the decode of row i+1
  // with the FMA of row i through two scratch slots, which reorders work
  // but never the per-row accumulation. The serial simulation runs the FMA
  // first so a row's multiply stays adjacent to its own decode; the decode
  // of the next row then fills the other slot, as the in-flight copy would.
  auto run = [&](unsigned wi, uint32_t r0, uint32_t r1) {
    try {
      RowScratch* slot[2] = {&slots[2 * wi], &slots[2 * wi + 1]};
      decode_row_timed(layer, r0, *slot[r0 & 1], stage[wi]);
      for (uint32_t r = r0; r < r1; ++r) {
        const uint64_t t0 = now_ns();
        res.y[r] = row_fma(layer, r, *slot[r & 1], xp.data());
        stage[wi][3] += now_ns() - t0;
        if (r + 1 < r1)
          decode_row_timed(layer, r + 1, *slot[(r + 1) & 1], stage[wi]);
      }
    } catch (...) {
      errors[wi] = std::current_exception();
    }
  };

  const uint64_t w0 = now_ns();
  if (workers == 1) {
    run(0, 0, rows);
  } else {
    // the caller serves the first range while the spawned workers run theirs
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned wi = 1; wi < workers; ++wi) {
      const uint32_t r0 = (uint32_t)((uint64_t)rows * wi / workers);
      const uint32_t r1 = (uint32_t)((uint64_t)rows * (wi + 1) / workers);
      pool.emplace_back(run, wi, r0, r1);
    }
    run(0, 0, (uint32_t)((uint64_t)rows / workers));
    for (std::thread& t : pool)
      t.join();
  }
  res.wall_ns = now_ns() - w0;
  for (unsigned wi = 0; wi < workers; ++wi) {
    if (errors[wi])
      std::rethrow_exception(errors[wi]);
    for (int k = 0; k < 4; ++k)
      res.stage_ns[k] += stage[wi][k];
  }
  return res;
}

std::vector<double> matvec_reference_f64(const PackedLayer& layer,
                                         std::span<const float> x) {
  const std::vector<float> xp = checked_permute(layer, x);
  const LayerConfig& cfg = layer.cfg;
  std::vector<double> y(cfg.rows, 0.0);
  RowScratch s(cfg);
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    row_fetch_params(layer, r, s);
    row_compute_scales(layer, r, s);
    row_decode(layer, r, s);
    double acc = 0.0;
    for (uint32_t c = 0; c < cfg.padded_cols(); ++c)
      acc += (double)s.wbuf[c] * (double)xp[c];
    const CsrOutliers& csr = layer.csr;
    for (uint32_t i = csr.row_ptr[r]; i < csr.row_ptr[r + 1]; ++i)
      acc += (double)f16_to_f32(csr.values[i]) * (double)xp[csr.col_ind[i]];
    y[r] = acc;
  }
  return y;
}

double BenchReport::gflops(uint64_t wall) const {
  if (wall == 0)
    return 0.0;
  const double flops =
      2.0 * ((double)rows * (double)cols) * (double)repetitions;
  return flops / (double)wall;
}

double BenchReport::tokens_per_s() const {
  if (pipelined_wall_ns == 0)
    return 0.0;
  return (double)repetitions * 1e9 / (double)pipelined_wall_ns;
}

const char* BenchReport::csv_header() {
  return "rows,cols,avg_bit,workers,mode,wall_ns,stage1_ns,stage2_ns,"
         "stage3_ns,stage4_ns,gflops";
}

std::string BenchReport::to_csv() const {
  char line[512];
  std::string out(csv_header());
  out += '\n';
  std::snprintf(line, sizeof(line),
                "%u,%u,%.8f,%u,oracle,%llu,%llu,%llu,%llu,%llu,%.6f\n", rows,
                cols, avg_bit, 1u, (unsigned long long)oracle_wall_ns,
                (unsigned long long)oracle_stage_ns[0],
                (unsigned long long)oracle_stage_ns[1],
                (unsigned long long)oracle_stage_ns[2],
                (unsigned long long)oracle_stage_ns[3],
                gflops(oracle_wall_ns));
  out += line;
  std::snprintf(line, sizeof(line),
                "%u,%u,%.8f,%u,pipelined,%llu,%llu,%llu,%llu,%llu,%.6f\n",
                rows, cols, avg_bit, workers,
                (unsigned long long)pipelined_wall_ns,
                (unsigned long long)pipelined_stage_ns[0],
                (unsigned long long)pipelined_stage_ns[1],
                (unsigned long long)pipelined_stage_ns[2],
                (unsigned long long)pipelined_stage_ns[3],
                gflops(pipelined_wall_ns));
  out += line;
  return out;
}

BenchReport bench_matvec(const PackedLayer& layer, std::span<const float> x,
                         int repetitions, unsigned workers) {
  if (repetitions < 1)
    throw Error("bench_matvec: repetitions must be >= 1");
  if (workers == 0)
    throw Error("bench_matvec: workers must be >= 1");
  BenchReport rep;
  rep.rows = layer.cfg.rows;
  rep.cols = layer.cfg.cols;
  rep.workers = workers;
  rep.repetitions = repetitions;
  rep.avg_bit = storage_bits_actual(layer).actual_container_bit;
  rep.bytes_touched =
      payload_bytes(layer) + 4ull * (layer.cfg.cols + layer.cfg.rows);

  (void)matvec_oracle(layer, x); // warm caches
  (void)matvec_pipelined(layer, x, workers);
  // interleave the two modes so slow machine phases are charged to both
  for (int i = 0; i < repetitions; ++i) {
    const MatvecResult o = matvec_oracle(layer, x);
    rep.oracle_wall_ns += o.wall_ns;
    rep.oracle_best_ns =
        i ? std::min(rep.oracle_best_ns, o.wall_ns) : o.wall_ns;
    for (int k = 0; k < 4; ++k)
      rep.oracle_stage_ns[k] += o.stage_ns[k];
    const MatvecResult p = matvec_pipelined(layer, x, workers);
    rep.pipelined_wall_ns += p.wall_ns;
    rep.pipelined_best_ns =
        i ? std::min(rep.pipelined_best_ns, p.wall_ns) : p.wall_ns;
    for (int k = 0; k < 4; ++k)
      rep.pipelined_stage_ns[k] += p.stage_ns[k];
  }
  return rep;
}

} // namespace qweight
