// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "qweight/bitpack.hpp"

#include "helpers.hpp"

using namespace qweight;

namespace {

PackedTile ramp_tile() {
  std::array<uint8_t, 48> c2{};
  for (size_t k = 0; k < 48; ++k)
    c2[k] = (uint8_t)(k % 4);
  std::array<uint8_t, 16> c4{};
  std::iota(c4.begin(), c4.end(), (uint8_t)0);
  std::array<uint8_t, 3> zeros{};
  std::array<uint8_t, 3> scodes{};
  return pack_tile(c2, c4, zeros, scodes);
}

} // namespace

TEST_CASE("golden: zero tile") {
  std::array<uint8_t, 48> c2{};
  std::array<uint8_t, 16> c4{};
  std::array<uint8_t, 3> z{};
  std::array<uint8_t, 3> s{};
  auto t = pack_tile(c2, c4, z, s);
  auto want = qtest::read_file_bytes(
      std::filesystem::path(QWEIGHT_GOLDEN_DIR) / "tile_zero.bin");
  CHECK(qtest::tile_bytes(t) == want);
}

TEST_CASE("golden: ramp tile") {
  auto t = ramp_tile();
  auto want = qtest::read_file_bytes(
      std::filesystem::path(QWEIGHT_GOLDEN_DIR) / "tile_ramp.bin");
  CHECK(qtest::tile_bytes(t) == want);
  for (int i = 0; i < 12; ++i)
    CHECK(t.main[i] == 0xE4);
}

TEST_CASE("golden: meta tile") {
  std::array<uint8_t, 48> c2{};
  std::array<uint8_t, 16> c4{};
  std::array<uint8_t, 3> z{1, 2, 3};
  std::array<uint8_t, 3> s{9, 5, 3};
  auto t = pack_tile(c2, c4, z, s);
  CHECK(t.meta == 0x7679);
  auto want = qtest::read_file_bytes(
      std::filesystem::path(QWEIGHT_GOLDEN_DIR) / "tile_meta.bin");
  CHECK(qtest::tile_bytes(t) == want);
}

TEST_CASE("2-bit codes are LSB-first in the byte") {
  std::array<uint8_t, 48> c2{};
  c2[0] = 3;
  c2[5] = 2; // byte 1, bits [2,3]
  std::array<uint8_t, 16> c4{};
  std::array<uint8_t, 3> z{};
  std::array<uint8_t, 3> s{};
  auto t = pack_tile(c2, c4, z, s);
  CHECK(t.main[0] == 0x03);
  CHECK(t.main[1] == 0x08);
}

TEST_CASE("4-bit codes put even channels in the low nibble") {
  std::array<uint8_t, 48> c2{};
  std::array<uint8_t, 16> c4{};
  c4[0] = 0xF;
  c4[1] = 0xA;
  c4[8] = 0x1; // first secondary byte, low nibble
  std::array<uint8_t, 3> z{};
  std::array<uint8_t, 3> s{};
  auto t = pack_tile(c2, c4, z, s);
  CHECK(t.main[12] == 0xAF);
  CHECK(t.secondary[0] == 0x01);
}

TEST_CASE("tile round trip, randomized") {
  std::mt19937_64 rng(55);
  for (int iter = 0; iter < 500; ++iter) {
    std::array<uint8_t, 48> c2;
    for (auto& c : c2)
      c = (uint8_t)(rng() % 4);
    std::array<uint8_t, 16> c4;
    for (auto& c : c4)
      c = (uint8_t)(rng() % 16);
    std::array<uint8_t, 3> z;
    for (auto& v : z)
      v = (uint8_t)(rng() % 4);
    std::array<uint8_t, 3> s{(uint8_t)(rng() % 16), (uint8_t)(rng() % 8),
                             (uint8_t)(rng() % 8)};
    auto t = pack_tile(c2, c4, z, s);
    auto f = unpack_tile(t);
    CHECK(f.codes2 == c2);
    CHECK(f.codes4 == c4);
    CHECK(f.zeros == z);
    CHECK(f.scodes == s);
    // packing the unpacked fields is byte-identical
    CHECK(pack_tile(f.codes2, f.codes4, f.zeros, f.scodes) == t);
  }
}

TEST_CASE("meta round trip covers the full field ranges") {
  std::array<uint8_t, 3> z;
  std::array<uint8_t, 3> s;
  for (int z0 = 0; z0 < 4; ++z0)
    for (int s0 : {0, 7, 15})
      for (int s1 : {0, 3, 7}) {
        z = {(uint8_t)z0, (uint8_t)(3 - z0 % 4), (uint8_t)(z0 ^ 1)};
        s = {(uint8_t)s0, (uint8_t)s1, (uint8_t)(7 - s1)};
        uint16_t m = pack_meta(z, s);
        std::array<uint8_t, 3> z2, s2;
        unpack_meta(m, z2, s2);
        CHECK(z2 == z);
        CHECK(s2 == s);
      }
}

TEST_CASE("pack rejects out-of-range fields") {
  std::array<uint8_t, 48> c2{};
  std::array<uint8_t, 16> c4{};
  std::array<uint8_t, 3> z{};
  std::array<uint8_t, 3> s{};
  auto bad2 = c2;
  bad2[7] = 4;
  CHECK_THROWS_AS(pack_tile(bad2, c4, z, s), Error);
  auto bad4 = c4;
  bad4[3] = 16;
  CHECK_THROWS_AS(pack_tile(c2, bad4, z, s), Error);
  auto badz = z;
  badz[1] = 4;
  CHECK_THROWS_AS(pack_tile(c2, c4, badz, s), Error);
  auto bads = s;
  bads[1] = 8; // 3-bit slot
  CHECK_THROWS_AS(pack_tile(c2, c4, s, bads), Error);
  CHECK_THROWS_AS(pack_meta(std::vector<uint8_t>(2, 0), std::vector<uint8_t>(3, 0)),
                  Error);
}

TEST_CASE("layer stream sizes for 16x64 at one tile per row") {
  auto plan = qtest::manual_plan(64, 16);
  auto cfg = qtest::make_cfg(plan, 16);
  CHECK(cfg.triples() == 1);
  CHECK(cfg.blocks4() == 1);
  CHECK(cfg.paired_tiles() == 1);
  CHECK(cfg.tail2_blocks() == 0);
  CHECK(cfg.tail4_blocks() == 0);
  CHECK(cfg.main_bytes() == 256);
  CHECK(cfg.secondary_bytes() == 64);
  CHECK(cfg.meta_bytes() == 32);
  CHECK(cfg.sorder_count() == 3);
  CHECK(cfg.sorder_bytes() == 9);
  CHECK(cfg.fourbit_count() == 16);
  CHECK(cfg.fourbit_bytes() == 48);

  std::mt19937_64 rng(66);
  auto groups = qtest::random_groups(cfg, rng);
  auto layer = pack_layer(cfg, plan, groups, CsrOutliers{});
  CHECK(layer.main.size() == 256);
  CHECK(layer.tail2.empty());
  CHECK(layer.tail4.empty());
  CHECK(layer.secondary.size() == 64);
  CHECK(layer.meta.size() == 16);
  CHECK(layer.sorder.size() == 3);
  CHECK(layer.fourbit.size() == 16);
  CHECK_NOTHROW(validate_layer(layer));
}

TEST_CASE("unbalanced layers split into paired tiles and tails") {
  // 2-bit heavy: ic=160, n4=16 -> n2=144, T2=3, T4=1
  auto plan2 = qtest::manual_plan(160, 16);
  auto cfg2 = qtest::make_cfg(plan2, 8);
  CHECK(cfg2.paired_tiles() == 1);
  CHECK(cfg2.tail2_blocks() == 2);
  CHECK(cfg2.tail4_blocks() == 0);
  CHECK(cfg2.main_bytes() == 8u * 16);
  CHECK(cfg2.tail2_bytes() == 8u * 2 * 12);

  // 4-bit heavy: ic=112, n4=64 -> n2=48, T2=1, T4=4
  auto plan4 = qtest::manual_plan(112, 64);
  auto cfg4 = qtest::make_cfg(plan4, 8);
  CHECK(cfg4.paired_tiles() == 1);
  CHECK(cfg4.tail2_blocks() == 0);
  CHECK(cfg4.tail4_blocks() == 3);
  CHECK(cfg4.tail4_bytes() == 8u * 3 * 4);
  CHECK(cfg4.secondary_bytes() == 8u * 4 * 4);

  std::mt19937_64 rng(77);
  for (auto [plan, cfg] : {std::pair{plan2, cfg2}, std::pair{plan4, cfg4}}) {
    auto groups = qtest::random_groups(cfg, rng);
    auto csr = qtest::random_csr(plan, cfg.rows, rng);
    auto cfg_nnz = cfg;
    cfg_nnz.outlier_count = csr.nnz();
    auto layer = pack_layer(cfg_nnz, plan, groups, csr);
    CHECK_NOTHROW(validate_layer(layer));
    CHECK(qtest::groups_equal(unpack_layer(layer), groups));
  }
}

TEST_CASE("layer round trip, randomized geometries") {
  std::mt19937_64 rng(88);
  const uint32_t ics[] = {64, 80, 96, 112, 128, 160, 256};
  for (int iter = 0; iter < 60; ++iter) {
    uint32_t ic = ics[iter % 7];
    uint32_t max4 = ic / 16;
    uint32_t n4 = 16u * (uint32_t)(rng() % (max4 + 1));
    uint32_t rows = 1 + (uint32_t)(rng() % 33);
    auto plan = qtest::manual_plan(ic, n4);
    auto cfg = qtest::make_cfg(plan, rows);
    auto groups = qtest::random_groups(cfg, rng);
    auto csr = qtest::random_csr(plan, rows, rng);
    cfg.outlier_count = csr.nnz();
    auto layer = pack_layer(cfg, plan, groups, csr);
    validate_layer(layer);
    auto back = unpack_layer(layer);
    CHECK(qtest::groups_equal(back, groups));
    // packing again is bit-identical
    auto layer2 = pack_layer(cfg, plan, back, layer.csr);
    CHECK(layer2 == layer);
  }
}

TEST_CASE("code accessors agree with the unpacked fields") {
  std::mt19937_64 rng(99);
  auto plan = qtest::manual_plan(160, 32); // T2 > T4, tails in play
  auto cfg = qtest::make_cfg(plan, 5);
  auto groups = qtest::random_groups(cfg, rng);
  auto layer = pack_layer(cfg, plan, groups, CsrOutliers{});
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    for (uint32_t p = 0; p < cfg.n2_padded(); ++p)
      CHECK(code2_at(layer, r, p) ==
            groups.codes2[(size_t)r * cfg.n2_padded() + p]);
    for (uint32_t p = 0; p < cfg.n4; ++p)
      CHECK(code4_at(layer, r, p) == groups.codes4[(size_t)r * cfg.n4 + p]);
    for (uint32_t t = 0; t < cfg.triples(); ++t) {
      std::array<uint8_t, 3> z, s;
      unpack_meta(meta_at(layer, r, t), z, s);
      for (int j = 0; j < 3; ++j) {
        CHECK(z[j] == groups.zeros2[(size_t)r * cfg.groups_per_row() + t * 3 + j]);
        CHECK(s[j] == groups.scodes[(size_t)r * cfg.groups_per_row() + t * 3 + j]);
      }
    }
  }
}

TEST_CASE("validate_layer flags inconsistencies") {
  std::mt19937_64 rng(111);
  auto plan = qtest::manual_plan(64, 16);
  auto cfg = qtest::make_cfg(plan, 4);
  auto groups = qtest::random_groups(cfg, rng);
  auto layer = pack_layer(cfg, plan, groups, CsrOutliers{});
  CHECK_NOTHROW(validate_layer(layer));

  auto bad = layer;
  bad.main.pop_back();
  CHECK_THROWS_AS(validate_layer(bad), Error);

  bad = layer;
  bad.cfg.group1 = 8;
  CHECK_THROWS_AS(validate_layer(bad), Error);

  bad = layer;
  bad.sorder[0].zero2 = 16;
  CHECK_THROWS_AS(validate_layer(bad), Error);

  bad = layer;
  bad.fourbit[0].zero = 99;
  CHECK_THROWS_AS(validate_layer(bad), Error);

  bad = layer;
  bad.cfg.outlier_count = 3; // csr says 0
  CHECK_THROWS_AS(validate_layer(bad), Error);

  bad = layer;
  bad.csr.row_ptr = {0, 1, 1, 1, 1};
  bad.csr.col_ind = {60}; // inside the 4-bit region (n2 = 48)
  bad.csr.values = {0x3c00};
  bad.cfg.outlier_count = 1;
  CHECK_THROWS_AS(validate_layer(bad), Error);
}

TEST_CASE("pack_layer rejects content that disagrees with the config") {
  std::mt19937_64 rng(222);
  auto plan = qtest::manual_plan(64, 16);
  auto cfg = qtest::make_cfg(plan, 4);
  auto groups = qtest::random_groups(cfg, rng);

  auto short_codes = groups;
  short_codes.codes2.pop_back();
  CHECK_THROWS_AS(pack_layer(cfg, plan, short_codes, CsrOutliers{}), Error);

  auto wide_scode = groups;
  wide_scode.scodes[1] = 9; // group column 1 carries only 3 bits
  CHECK_THROWS_AS(pack_layer(cfg, plan, wide_scode, CsrOutliers{}), Error);
}
