// SPDX-License-Identifier: Apache-2.0
//
// qweight: range-aware mixed 2/4-bit weight compression toolkit.
// Subcommands: gen, quantize, verify, matvec, bench, report.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qweight/container.hpp"
#include "qweight/engine.hpp"
#include "qweight/metrics.hpp"
#include "qweight/outliers.hpp"
#include "qweight/quant.hpp"
#include "qweight/quantizer.hpp"
#include "qweight/synth.hpp"

using namespace qweight;

namespace {

int log_level() {
  const char* env = std::getenv("QWEIGHT_LOG");
  return env ? std::atoi(env) : 0;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1)
    std::cerr << "[qweight] " << msg << "\n";
}

struct RunConfig {
  std::string weights, calib, packed, activation, out, out_dir = ".";
  std::string calib_out, act_out;
  uint32_t rows = 0, cols = 0;
  double alpha = 0.25;
  uint32_t g1 = 16, g2 = 16, n2 = 4;
  double outlier_ratio = 0.002;
  unsigned workers = 1;
  uint64_t seed = 1;
  int reps = 5, bins = 16;
  double plant_ratio = 0.0;
  double plant_scale = 8.0;
};

int usage_error(const std::string& msg) {
  std::cerr << "usage error: " << msg << "\n";
  return 2;
}

int check_format_params(const RunConfig& rc) {
  if (rc.g1 != 16)
    return usage_error("the packed tile format requires --g1 16");
  if (rc.n2 != 4)
    return usage_error("the packed tile format requires --n2 4");
  if (rc.g2 == 0)
    return usage_error("--g2 must be positive");
  return 0;
}

int cmd_gen(const RunConfig& rc) {
  if (rc.rows == 0 || rc.cols == 0)
    return usage_error("gen needs --rows and --cols");
  WeightMatrix w = synth_gaussian(rc.rows, rc.cols, rc.seed);
  if (rc.plant_ratio > 0.0)
    plant_outliers(w, rc.plant_ratio, (float)rc.plant_scale, rc.seed);
  write_f32(rc.out, w.data);
  log_info("wrote weights " + rc.out);
  if (!rc.calib_out.empty()) {
    write_f32(rc.calib_out, synth_calibration(rc.cols, rc.seed).h);
    log_info("wrote calibration " + rc.calib_out);
  }
  if (!rc.act_out.empty()) {
    write_f32(rc.act_out, synth_activation(rc.cols, rc.seed));
    log_info("wrote activation " + rc.act_out);
  }
  return 0;
}

int cmd_quantize(const RunConfig& rc) {
  if (int rcode = check_format_params(rc))
    return rcode;
  if (rc.rows == 0 || rc.cols == 0)
    return usage_error("quantize needs --rows and --cols");
  const WeightMatrix w = load_weights(rc.weights, rc.rows, rc.cols);
  CalibrationVector h;
  if (rc.calib.empty()) {
    h = identity_calibration(rc.cols);
    std::cout << "calibration: identity (no --calib given)\n";
  } else {
    h = load_calibration(rc.calib, rc.cols);
  }
  QuantizeParams params;
  params.alpha = rc.alpha;
  params.group2 = rc.g2;
  params.outlier_ratio = rc.outlier_ratio;
  const PackedLayer layer = quantize_layer(w, h, params);
  write_packed_layer(layer, rc.out);
  std::cout << "packed layer written to " << rc.out << "\n";
  std::cout << "outliers: " << layer.csr.nnz() << "\n";
  std::cout << storage_bits_actual(layer).to_string();
  return 0;
}

// verify helpers ------------------------------------------------------------

struct CheckList {
  bool ok = true;
  void report(const std::string& name, bool pass, const std::string& note = "") {
    std::cout << "check " << name << ": " << (pass ? "PASS" : "FAIL");
    if (!note.empty())
      std::cout << " (" << note << ")";
    std::cout << "\n";
    ok = ok && pass;
  }
};

std::vector<SlotRef> stored_slots(const CsrOutliers& csr) {
  std::vector<SlotRef> slots;
  slots.reserve(csr.nnz());
  for (size_t r = 0; r + 1 < csr.row_ptr.size(); ++r)
    for (uint32_t i = csr.row_ptr[r]; i < csr.row_ptr[r + 1]; ++i)
      slots.push_back({(uint32_t)r, csr.col_ind[i]});
  return slots;
}

// compare stored file sections against the recomputed layer, naming damage
bool compare_sections(const std::vector<uint8_t>& file_bytes,
                      const PackedLayer& recomputed, CheckList& checks) {
  const std::vector<uint8_t> fresh = serialize_packed_layer(recomputed);
  if (fresh == file_bytes) {
    checks.report("sections", true);
    return true;
  }
  // locate sections in the stored file via the freshly built table
  // (offsets are a pure function of the config, which both share)
  std::vector<SectionInfo> table;
  {
    size_t pos = 48 + 4;
    for (uint32_t k = 0; k < 12; ++k) {
      SectionInfo s;
      s.id = (uint32_t)(fresh[pos] | (fresh[pos + 1] << 8) |
                        (fresh[pos + 2] << 16) |
                        ((uint32_t)fresh[pos + 3] << 24));
      for (int b = 7; b >= 0; --b)
        s.offset = (s.offset << 8) | fresh[pos + 4 + b];
      for (int b = 7; b >= 0; --b)
        s.length = (s.length << 8) | fresh[pos + 12 + b];
      table.push_back(s);
      pos += 20;
    }
  }
  std::string bad;
  for (uint32_t id = 1; id <= 12; ++id) {
    const SectionId sid = (SectionId)id;
    const std::vector<uint8_t> want = encode_layer_section(recomputed, sid);
    const SectionInfo& info = table[id - 1];
    const bool match =
        info.offset + info.length <= file_bytes.size() &&
        std::equal(want.begin(), want.end(), file_bytes.begin() + info.offset);
    if (!match) {
      if (!bad.empty())
        bad += ", ";
      bad += section_name(sid);
    }
  }
  if (bad.empty())
    bad = "header or checksum";
  checks.report("sections", false, "mismatch in: " + bad);
  return false;
}

void check_reconstruction(const WeightMatrix& w, const PackedLayer& layer,
                          CheckList& checks) {
  const ChannelPlan& plan = layer.plan;
  const LayerConfig& cfg = layer.cfg;
  const WeightMatrix wp = permute_matrix(w, plan);
  const WeightMatrix recon = reconstruct_dense(layer);
  const LayerGroups g = unpack_layer(layer);
  std::vector<uint8_t> mask(wp.data.size(), 0);
  for (const SlotRef& s : stored_slots(layer.csr))
    mask[(size_t)s.row * wp.cols + s.col] = 1;

  bool bound_ok = true;
  bool additive_ok = true;
  const uint32_t gpr = cfg.groups_per_row();
  std::vector<float> keep;
  keep.reserve(kGroupSize);
  for (uint32_t r = 0; r < cfg.rows && (bound_ok || additive_ok); ++r) {
    const uint32_t rb = r / cfg.group2;
    for (uint32_t j = 0; j < gpr + cfg.blocks4(); ++j) {
      const bool two_bit = j < gpr;
      const uint32_t base = j * kGroupSize;
      keep.clear();
      for (uint32_t k = 0; k < kGroupSize; ++k)
        if (!mask[(size_t)r * wp.cols + base + k])
          keep.push_back(wp.at(r, base + k));
      if (keep.empty())
        keep.push_back(0.0f);
      const ScaleZero sz = fit_scale_zero(keep, two_bit ? cfg.n : cfg.n2);
      float shat;
      if (two_bit) {
        const uint8_t sc = g.scodes[(size_t)r * gpr + j];
        const uint8_t eff = (j % 3 == 0) ? sc : (uint8_t)(sc << 1);
        const SorderParam& sp = layer.sorder[(size_t)rb * gpr + j];
        shat = dequantize_scale(eff, sp.zero2, sp.scale2);
      } else {
        shat = f16_to_f32(layer.fourbit[(size_t)r * cfg.blocks4() + j - gpr].scale);
      }
      const float codes_max = two_bit ? 3.0f : 15.0f;
      const float tol = sz.scale * 1.00001f +
                        codes_max * std::fabs(shat - sz.scale) +
                        1e-30f;
      for (uint32_t k = 0; k < kGroupSize; ++k) {
        const uint32_t c = base + k;
        if (mask[(size_t)r * wp.cols + c]) {
          // outlier slot: dense part must be exactly zero and the sparse
          // value must be the fp16 rounding of the original
          if (recon.at(r, c) != 0.0f)
            additive_ok = false;
          continue;
        }
        if (plan.perm[c] == kPadChannel) {
          if (recon.at(r, c) != 0.0f)
            bound_ok = false;
          continue;
        }
        if (std::fabs(recon.at(r, c) - wp.at(r, c)) > tol)
          bound_ok = false;
      }
    }
  }
  for (size_t r = 0; r + 1 < layer.csr.row_ptr.size(); ++r)
    for (uint32_t i = layer.csr.row_ptr[r]; i < layer.csr.row_ptr[r + 1]; ++i) {
      const float orig = wp.at((uint32_t)r, layer.csr.col_ind[i]);
      if (f16_to_f32(layer.csr.values[i]) != f16_to_f32(f32_to_f16(orig)))
        additive_ok = false;
    }
  checks.report("reconstruction_bound", bound_ok);
  checks.report("outlier_additivity", additive_ok);
}

void check_oracle(const PackedLayer& layer, CheckList& checks) {
  const std::vector<float> x = synth_activation(layer.cfg.cols, 1234);
  const MatvecResult o = matvec_oracle(layer, x);
  const MatvecResult p1 = matvec_pipelined(layer, x, 1);
  const MatvecResult p4 = matvec_pipelined(layer, x, 4);
  checks.report("pipelined_bitwise", o.y == p1.y && o.y == p4.y);
  const std::vector<double> ref = matvec_reference_f64(layer, x);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = (double)o.y[i] - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  const bool rel_ok = den == 0.0 ? num == 0.0 : std::sqrt(num / den) <= 1e-3;
  checks.report("oracle_vs_f64", rel_ok);
}

int cmd_verify(const RunConfig& rc) {
  std::ifstream in(rc.packed, std::ios::binary);
  if (!in)
    return usage_error("cannot open " + rc.packed);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  in.close();

  CheckList checks;
  PackedLayer stored;
  bool crc_ok = true;
  try {
    stored = deserialize_packed_layer(bytes, true);
  } catch (const Error& e) {
    crc_ok = false;
    log_info(std::string("strict parse failed: ") + e.what());
    stored = deserialize_packed_layer(bytes, false); // tolerant reparse
  }
  checks.report("container_checksum", crc_ok);

  try {
    validate_plan(stored.plan);
  } catch (const Error& e) {
    checks.report("plan", false, e.what());
    std::cout << "verify: FAIL\n";
    return 1;
  }

  WeightMatrix w;
  try {
    w = load_weights(rc.weights, stored.cfg.rows, stored.cfg.cols);
  } catch (const Error& e) {
    return usage_error(std::string("dimension error: ") + e.what());
  }

  QuantizeParams params;
  params.alpha = stored.cfg.alpha;
  params.group2 = stored.cfg.group2;
  params.outlier_ratio = stored.cfg.outlier_ratio;
  PackedLayer recomputed;
  try {
    recomputed =
        quantize_with_plan(w, stored.plan, params, stored_slots(stored.csr));
  } catch (const Error& e) {
    checks.report("recompute", false, e.what());
    std::cout << "verify: FAIL\n";
    return 1;
  }
  checks.report("recompute", true);
  compare_sections(bytes, recomputed, checks);
  check_reconstruction(w, recomputed, checks);
  check_oracle(recomputed, checks);
  std::cout << (checks.ok ? "verify: PASS" : "verify: FAIL") << "\n";
  return checks.ok ? 0 : 1;
}

int cmd_matvec(const RunConfig& rc) {
  const PackedLayer layer = read_packed_layer(rc.packed);
  const std::vector<float> x = read_f32(rc.activation);
  if (x.size() != layer.cfg.cols)
    return usage_error("dimension error: activation length " +
                       std::to_string(x.size()) + " != input channels " +
                       std::to_string(layer.cfg.cols));
  const MatvecResult r = matvec_pipelined(layer, x, rc.workers);
  write_f32(rc.out, r.y);
  log_info("matvec wall_ns=" + std::to_string(r.wall_ns));
  return 0;
}

int cmd_bench(const RunConfig& rc) {
  const PackedLayer layer = read_packed_layer(rc.packed);
  std::vector<float> x;
  if (rc.activation.empty()) {
    x = synth_activation(layer.cfg.cols, rc.seed);
  } else {
    x = read_f32(rc.activation);
    if (x.size() != layer.cfg.cols)
      return usage_error("dimension error: activation length mismatch");
  }
  const BenchReport rep = bench_matvec(layer, x, rc.reps, rc.workers);
  const std::string csv = rep.to_csv();
  if (rc.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(rc.out);
    if (!out)
      return usage_error("cannot open " + rc.out + " for writing");
    out << csv;
  }
  log_info("pipelined/oracle wall ratio: " + std::to_string(rep.ratio()));
  log_info("tokens/s: " + std::to_string(rep.tokens_per_s()));
  log_info("bytes touched per pass: " + std::to_string(rep.bytes_touched));
  return 0;
}

int cmd_report(const RunConfig& rc) {
  const PackedLayer layer = read_packed_layer(rc.packed);
  WeightMatrix w;
  try {
    w = load_weights(rc.weights, layer.cfg.rows, layer.cfg.cols);
  } catch (const Error& e) {
    return usage_error(std::string("dimension error: ") + e.what());
  }
  namespace fs = std::filesystem;
  fs::create_directories(rc.out_dir);
  {
    std::ofstream os(fs::path(rc.out_dir) / "bits.csv");
    storage_bits_actual(layer).write_csv(os);
  }
  {
    std::ofstream os(fs::path(rc.out_dir) / "error_stats.csv");
    quant_error_stats(w, layer).write_csv(os);
  }
  const RangeReport rr = group_range_report(w, layer.plan, layer.cfg.group1);
  {
    std::ofstream os(fs::path(rc.out_dir) / "group_range.csv");
    rr.write_csv(os);
  }
  const std::vector<uint64_t> hist = rr.histogram(rc.bins);
  std::cout << "range histogram (" << rc.bins << " bins):";
  for (uint64_t h : hist)
    std::cout << " " << h;
  std::cout << "\n";
  std::cout << "reports written to " << rc.out_dir << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"range-aware mixed 2/4-bit weight compression toolkit"};
  app.require_subcommand(1);
  RunConfig rc;

  CLI::App* gen = app.add_subcommand("gen", "generate synthetic inputs");
  gen->add_option("--rows", rc.rows)->required();
  gen->add_option("--cols", rc.cols)->required();
  gen->add_option("--seed", rc.seed);
  gen->add_option("--out", rc.out)->required();
  gen->add_option("--plant-ratio", rc.plant_ratio);
  gen->add_option("--plant-scale", rc.plant_scale);
  gen->add_option("--calib-out", rc.calib_out);
  gen->add_option("--act-out", rc.act_out);

  CLI::App* quant = app.add_subcommand("quantize", "quantize a weight matrix");
  quant->add_option("--weights", rc.weights)->required();
  quant->add_option("--rows", rc.rows)->required();
  quant->add_option("--cols", rc.cols)->required();
  quant->add_option("--alpha", rc.alpha);
  quant->add_option("--g1", rc.g1);
  quant->add_option("--g2", rc.g2);
  quant->add_option("--n2", rc.n2);
  quant->add_option("--outlier-ratio", rc.outlier_ratio);
  quant->add_option("--calib", rc.calib);
  quant->add_option("--out", rc.out)->required();

  CLI::App* verify = app.add_subcommand("verify", "verify a packed layer");
  verify->add_option("--packed", rc.packed)->required();
  verify->add_option("--weights", rc.weights)->required();

  CLI::App* matvec = app.add_subcommand("matvec", "dequantizing matvec");
  matvec->add_option("--packed", rc.packed)->required();
  matvec->add_option("--activation", rc.activation)->required();
  matvec->add_option("--workers", rc.workers);
  matvec->add_option("--out", rc.out)->required();

  CLI::App* bench = app.add_subcommand("bench", "benchmark the engine");
  bench->add_option("--packed", rc.packed)->required();
  bench->add_option("--reps", rc.reps);
  bench->add_option("--workers", rc.workers);
  bench->add_option("--activation", rc.activation);
  bench->add_option("--seed", rc.seed);
  bench->add_option("--out", rc.out);

  CLI::App* report = app.add_subcommand("report", "emit metric CSVs");
  report->add_option("--packed", rc.packed)->required();
  report->add_option("--weights", rc.weights)->required();
  report->add_option("--out-dir", rc.out_dir);
  report->add_option("--bins", rc.bins);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen(rc);
    if (quant->parsed())
      return cmd_quantize(rc);
    if (verify->parsed())
      return cmd_verify(rc);
    if (matvec->parsed())
      return cmd_matvec(rc);
    if (bench->parsed())
      return cmd_bench(rc);
    if (report->parsed())
      return cmd_report(rc);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
