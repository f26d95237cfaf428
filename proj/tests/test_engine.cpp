// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "qweight/container.hpp"
#include "qweight/engine.hpp"
#include "qweight/fp16.hpp"
#include "qweight/quantizer.hpp"
#include "qweight/synth.hpp"

#include "helpers.hpp"

using namespace qweight;

namespace {

PackedLayer gaussian_layer(uint32_t rows, uint32_t cols, uint64_t seed,
                           double alpha = 0.25, double ratio = 0.002) {
  auto w = synth_gaussian(rows, cols, seed);
  auto h = synth_calibration(cols, seed ^ 0x9e97u);
  QuantizeParams p;
  p.alpha = alpha;
  p.outlier_ratio = ratio;
  return quantize_layer(w, h, p);
}

// the reference semantics: one f32 accumulator over the reconstructed row in
// ascending permuted order, then the CSR entries in ascending order
std::vector<float> manual_matvec(const PackedLayer& layer,
                                 std::span<const float> x) {
  auto recon = reconstruct_dense(layer);
  auto xp = apply_permutation(x, layer.plan);
  std::vector<float> y(layer.cfg.rows, 0.0f);
  for (uint32_t r = 0; r < layer.cfg.rows; ++r) {
    float acc = 0.0f;
    for (uint32_t c = 0; c < recon.cols; ++c)
      acc += recon.at(r, c) * xp[c];
    y[r] = acc;
  }
  sparse_matvec(layer.csr, xp, y);
  return y;
}

} // namespace

TEST_CASE("reconstruct_dense has the permuted geometry and zero pads") {
  auto layer = gaussian_layer(20, 80, 1);
  auto recon = reconstruct_dense(layer);
  CHECK(recon.rows == 20);
  CHECK(recon.cols == layer.cfg.padded_cols());
  for (uint32_t r = 0; r < recon.rows; ++r)
    for (uint32_t c = 0; c < recon.cols; ++c)
      if (layer.plan.perm[c] == kPadChannel)
        CHECK(recon.at(r, c) == 0.0f);
}

TEST_CASE("oracle equals the reconstruct+accumulate reference bitwise") {
  for (uint64_t seed : {2u, 3u, 4u}) {
    auto layer = gaussian_layer(24, 160, seed, seed % 2 ? 0.25 : 0.5, 0.005);
    auto x = synth_activation(160, seed + 100);
    auto res = matvec_oracle(layer, x);
    CHECK(res.y == manual_matvec(layer, x));
  }
}

TEST_CASE("zero-outlier layer matches the dense path bitwise") {
  auto layer = gaussian_layer(16, 128, 5, 0.25, 0.0);
  CHECK(layer.csr.nnz() == 0);
  auto x = synth_activation(128, 6);
  CHECK(matvec_oracle(layer, x).y == manual_matvec(layer, x));
}

TEST_CASE("pure 2-bit and pure 4-bit layers run") {
  auto two = gaussian_layer(9, 96, 7, 0.0, 0.0);
  auto four = gaussian_layer(9, 96, 8, 1.0, 0.0);
  auto x = synth_activation(96, 9);
  CHECK(matvec_oracle(two, x).y == manual_matvec(two, x));
  CHECK(matvec_oracle(four, x).y == manual_matvec(four, x));
}

TEST_CASE("zero activation gives exactly zero output") {
  auto layer = gaussian_layer(12, 64, 10);
  std::vector<float> x(64, 0.0f);
  for (float v : matvec_oracle(layer, x).y)
    CHECK(v == 0.0f);
}

TEST_CASE("matvec validates the activation") {
  auto layer = gaussian_layer(4, 64, 11);
  CHECK_THROWS_AS(matvec_oracle(layer, std::vector<float>(63)), Error);
  std::vector<float> bad(64, 1.0f);
  bad[7] = NAN;
  CHECK_THROWS_AS(matvec_oracle(layer, bad), Error);
  CHECK_THROWS_AS(matvec_pipelined(layer, std::vector<float>(1), 2), Error);
}

TEST_CASE("pipelined is bitwise identical across worker counts") {
  for (uint64_t seed : {12u, 13u, 14u}) {
    uint32_t rows = 8 + (uint32_t)(seed % 29);
    auto layer = gaussian_layer(rows, 160, seed, 0.25, 0.01);
    auto x = synth_activation(160, seed * 7);
    auto oracle = matvec_oracle(layer, x);
    for (unsigned workers : {1u, 2u, 3u, 8u, 64u}) {
      auto piped = matvec_pipelined(layer, x, workers);
      CHECK(piped.y == oracle.y);
    }
  }
  CHECK_THROWS_AS(
      matvec_pipelined(gaussian_layer(4, 64, 15), synth_activation(64, 1), 0),
      Error);
}

TEST_CASE("linearity within 1e-6 relative") {
  auto layer = gaussian_layer(16, 128, 16);
  auto x1 = synth_activation(128, 17);
  auto x2 = synth_activation(128, 18);
  std::vector<float> sum(128);
  for (size_t i = 0; i < sum.size(); ++i)
    sum[i] = x1[i] + x2[i];
  auto y1 = matvec_oracle(layer, x1).y;
  auto y2 = matvec_oracle(layer, x2).y;
  auto ys = matvec_oracle(layer, sum).y;
  double num = 0.0, den = 0.0;
  for (size_t r = 0; r < ys.size(); ++r) {
    double d = (double)ys[r] - ((double)y1[r] + (double)y2[r]);
    num += d * d;
    den += (double)ys[r] * (double)ys[r];
  }
  CHECK(std::sqrt(num) <= 1e-6 * std::sqrt(den) + 1e-12);
}

TEST_CASE("f32 oracle stays near the f64 reference") {
  auto layer = gaussian_layer(16, 1024, 19);
  auto x = synth_activation(1024, 20);
  auto y = matvec_oracle(layer, x).y;
  auto ref = matvec_reference_f64(layer, x);
  double num = 0.0, den = 0.0;
  for (size_t r = 0; r < ref.size(); ++r) {
    double d = (double)y[r] - ref[r];
    num += d * d;
    den += ref[r] * ref[r];
  }
  CHECK(std::sqrt(num / den) <= 1e-3);
}

TEST_CASE("stage clocks populate and fit inside the wall") {
  auto layer = gaussian_layer(64, 512, 21);
  auto x = synth_activation(512, 22);
  for (bool piped : {false, true}) {
    auto res = piped ? matvec_pipelined(layer, x, 2) : matvec_oracle(layer, x);
    CHECK(res.wall_ns > 0);
    uint64_t sum = 0;
    for (uint64_t s : res.stage_ns)
      sum += s;
    CHECK(sum > 0);
  }
}

TEST_CASE("bench output matches the documented schema") {
  auto layer = gaussian_layer(16, 128, 23);
  auto x = synth_activation(128, 24);
  auto rep = bench_matvec(layer, x, 3, 4);
  CHECK(rep.repetitions == 3);
  CHECK(rep.workers == 4);
  CHECK(rep.bytes_touched == payload_bytes(layer) + 4ull * (128 + 16));

  std::string csv = rep.to_csv();
  std::istringstream in(csv);
  std::string header, line1, line2, extra;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, line1));
  REQUIRE(std::getline(in, line2));
  CHECK_FALSE(std::getline(in, extra));
  CHECK(header ==
        "rows,cols,avg_bit,workers,mode,wall_ns,stage1_ns,stage2_ns,stage3_ns,"
        "stage4_ns,gflops");
  CHECK(header == BenchReport::csv_header());

  auto fields = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream fs(s);
    std::string f;
    while (std::getline(fs, f, ','))
      out.push_back(f);
    return out;
  };
  auto f1 = fields(line1);
  auto f2 = fields(line2);
  REQUIRE(f1.size() == 11);
  REQUIRE(f2.size() == 11);
  CHECK(f1[0] == "16");
  CHECK(f1[1] == "128");
  CHECK(std::stod(f1[2]) > 2.0); // avg bits per weight
  CHECK(f1[3] == "1");
  CHECK(f1[4] == "oracle");
  CHECK(std::stoull(f1[5]) > 0);
  CHECK(std::stod(f1[10]) > 0.0);
  CHECK(f2[3] == "4");
  CHECK(f2[4] == "pipelined");
  CHECK(std::stoull(f2[5]) > 0);

  CHECK_THROWS_AS(bench_matvec(layer, x, 0, 1), Error);
  CHECK_THROWS_AS(bench_matvec(layer, x, 1, 0), Error);
}

TEST_CASE("runs are deterministic") {
  auto layer = gaussian_layer(16, 128, 25);
  auto x = synth_activation(128, 26);
  auto a = matvec_oracle(layer, x);
  auto b = matvec_oracle(layer, x);
  CHECK(a.y == b.y);
  auto p1 = matvec_pipelined(layer, x, 3);
  auto p2 = matvec_pipelined(layer, x, 3);
  CHECK(p1.y == p2.y);
}
