// SPDX-License-Identifier: Apache-2.0
#include "qweight/bitpack.hpp"

#include <algorithm>
#include <cstring>

namespace qweight {

namespace {

// 16 2-bit codes -> 4 bytes, LSB-first
void pack_codes2(const uint8_t* codes, uint8_t* dst, size_t count) {
  std::memset(dst, 0, count / 4);
  for (size_t k = 0; k < count; ++k) {
    if (codes[k] > 3)
      throw Error("pack: 2-bit code out of range");
    dst[k / 4] = (uint8_t)(dst[k / 4] | (codes[k] << (2 * (k % 4))));
  }
}

void unpack_codes2(const uint8_t* src, uint8_t* codes, size_t count) {
  for (size_t k = 0; k < count; ++k)
    codes[k] = (src[k / 4] >> (2 * (k % 4))) & 3u;
}

// 8 4-bit codes -> 4 bytes, even index in the low nibble
void pack_nibbles(const uint8_t* codes, uint8_t* dst) {
  for (size_t k = 0; k < 8; ++k) {
    if (codes[k] > 15)
      throw Error("pack: 4-bit code out of range");
    if (k % 2 == 0)
      dst[k / 2] = codes[k];
    else
      dst[k / 2] = (uint8_t)(dst[k / 2] | (codes[k] << 4));
  }
}

void unpack_nibbles(const uint8_t* src, uint8_t* codes) {
  for (size_t k = 0; k < 8; ++k)
    codes[k] = (src[k / 2] >> (k % 2 ? 4 : 0)) & 0xFu;
}

} // namespace

uint16_t pack_meta(std::span<const uint8_t> zeros,
                   std::span<const uint8_t> scodes) {
  if (zeros.size() != 3 || scodes.size() != 3)
    throw Error("pack_meta: need 3 zeros and 3 scale codes");
  for (uint8_t z : zeros)
    if (z > 3)
      throw Error("pack_meta: zero-point out of range");
  if (scodes[0] > 15 || scodes[1] > 7 || scodes[2] > 7)
    throw Error("pack_meta: scale code out of range");
  return (uint16_t)(zeros[0] | (zeros[1] << 2) | (zeros[2] << 4) |
                    (scodes[0] << 6) | (scodes[1] << 10) | (scodes[2] << 13));
}

void unpack_meta(uint16_t meta, std::span<uint8_t> zeros,
                 std::span<uint8_t> scodes) {
  zeros[0] = meta & 3u;
  zeros[1] = (meta >> 2) & 3u;
  zeros[2] = (meta >> 4) & 3u;
  scodes[0] = (meta >> 6) & 15u;
  scodes[1] = (meta >> 10) & 7u;
  scodes[2] = (meta >> 13) & 7u;
}

PackedTile pack_tile(std::span<const uint8_t> codes2,
                     std::span<const uint8_t> codes4,
                     std::span<const uint8_t> zeros,
                     std::span<const uint8_t> scodes) {
  if (codes2.size() != kTileTwoBit || codes4.size() != kTileFourBit)
    throw Error("pack_tile: need 48 2-bit and 16 4-bit codes");
  PackedTile t;
  pack_codes2(codes2.data(), t.main.data(), kTileTwoBit);
  pack_nibbles(codes4.data(), t.main.data() + 12);
  pack_nibbles(codes4.data() + 8, t.secondary.data());
  t.meta = pack_meta(zeros, scodes);
  return t;
}

TileFields unpack_tile(const PackedTile& tile) {
  TileFields f;
  unpack_codes2(tile.main.data(), f.codes2.data(), kTileTwoBit);
  unpack_nibbles(tile.main.data() + 12, f.codes4.data());
  unpack_nibbles(tile.secondary.data(), f.codes4.data() + 8);
  unpack_meta(tile.meta, f.zeros, f.scodes);
  return f;
}

PackedLayer pack_layer(const LayerConfig& cfg, const ChannelPlan& plan,
                       const LayerGroups& groups, CsrOutliers csr) {
  const uint32_t t2 = cfg.triples();
  const uint32_t t4 = cfg.blocks4();
  const uint32_t paired = cfg.paired_tiles();
  const uint32_t gpr = cfg.groups_per_row();
  if (groups.codes2.size() != (size_t)cfg.rows * cfg.n2_padded() ||
      groups.zeros2.size() != (size_t)cfg.rows * gpr ||
      groups.scodes.size() != (size_t)cfg.rows * gpr ||
      groups.sorder.size() != cfg.sorder_count() ||
      groups.codes4.size() != (size_t)cfg.rows * cfg.n4 ||
      groups.fourbit.size() != cfg.fourbit_count())
    throw Error("pack_layer: group field sizes disagree with config");

  if (csr.row_ptr.empty()) // default-constructed CSR means no outliers
    csr.row_ptr.assign((size_t)cfg.rows + 1, 0);

  PackedLayer layer;
  layer.cfg = cfg;
  layer.plan = plan;
  layer.main.assign(cfg.main_bytes(), 0);
  layer.tail2.assign(cfg.tail2_bytes(), 0);
  layer.tail4.assign(cfg.tail4_bytes(), 0);
  layer.secondary.assign(cfg.secondary_bytes(), 0);
  layer.meta.assign((size_t)cfg.rows * t2, 0);
  layer.sorder = groups.sorder;
  layer.fourbit = groups.fourbit;
  layer.csr = std::move(csr);

  for (uint32_t r = 0; r < cfg.rows; ++r) {
    const uint8_t* c2 = groups.codes2.data() + (size_t)r * cfg.n2_padded();
    const uint8_t* c4 = groups.codes4.data() + (size_t)r * cfg.n4;
    const uint8_t* z2 = groups.zeros2.data() + (size_t)r * gpr;
    const uint8_t* sc = groups.scodes.data() + (size_t)r * gpr;
    for (uint32_t t = 0; t < t2; ++t) {
      layer.meta[(size_t)r * t2 + t] =
          pack_meta({z2 + 3 * t, 3}, {sc + 3 * t, 3});
      uint8_t* dst = t < paired
                         ? layer.main.data() + ((size_t)r * paired + t) * 16
                         : layer.tail2.data() +
                               ((size_t)r * (t2 - paired) + (t - paired)) * 12;
      pack_codes2(c2 + (size_t)t * kTileTwoBit, dst, kTileTwoBit);
    }
    for (uint32_t b = 0; b < t4; ++b) {
      uint8_t* first =
          b < paired
              ? layer.main.data() + ((size_t)r * paired + b) * 16 + 12
              : layer.tail4.data() +
                    ((size_t)r * (t4 - paired) + (b - paired)) * 4;
      pack_nibbles(c4 + (size_t)b * kTileFourBit, first);
      pack_nibbles(c4 + (size_t)b * kTileFourBit + 8,
                   layer.secondary.data() + ((size_t)r * t4 + b) * 4);
    }
  }
  validate_layer(layer);
  return layer;
}

LayerGroups unpack_layer(const PackedLayer& layer) {
  const LayerConfig& cfg = layer.cfg;
  const uint32_t t2 = cfg.triples();
  const uint32_t t4 = cfg.blocks4();
  const uint32_t gpr = cfg.groups_per_row();
  LayerGroups g;
  g.codes2.resize((size_t)cfg.rows * cfg.n2_padded());
  g.zeros2.resize((size_t)cfg.rows * gpr);
  g.scodes.resize((size_t)cfg.rows * gpr);
  g.sorder = layer.sorder;
  g.codes4.resize((size_t)cfg.rows * cfg.n4);
  g.fourbit = layer.fourbit;
  for (uint32_t r = 0; r < cfg.rows; ++r) {
    for (uint32_t t = 0; t < t2; ++t)
      unpack_meta(layer.meta[(size_t)r * t2 + t],
                  {g.zeros2.data() + (size_t)r * gpr + 3 * t, 3},
                  {g.scodes.data() + (size_t)r * gpr + 3 * t, 3});
    for (uint32_t p = 0; p < cfg.n2_padded(); ++p)
      g.codes2[(size_t)r * cfg.n2_padded() + p] = code2_at(layer, r, p);
    for (uint32_t p = 0; p < cfg.n4; ++p)
      g.codes4[(size_t)r * cfg.n4 + p] = code4_at(layer, r, p);
    (void)t4;
  }
  return g;
}

uint8_t code2_at(const PackedLayer& layer, uint32_t row, uint32_t pos) {
  const LayerConfig& cfg = layer.cfg;
  const uint32_t t = pos / kTileTwoBit;
  const uint32_t k = pos % kTileTwoBit;
  const uint32_t paired = cfg.paired_tiles();
  const uint8_t* base =
      t < paired
          ? layer.main.data() + ((size_t)row * paired + t) * 16
          : layer.tail2.data() +
                ((size_t)row * cfg.tail2_blocks() + (t - paired)) * 12;
  return (base[k / 4] >> (2 * (k % 4))) & 3u;
}

uint8_t code4_at(const PackedLayer& layer, uint32_t row, uint32_t pos) {
  const LayerConfig& cfg = layer.cfg;
  const uint32_t b = pos / kTileFourBit;
  const uint32_t k = pos % kTileFourBit;
  const uint32_t paired = cfg.paired_tiles();
  const uint8_t* base;
  uint32_t idx;
  if (k < 8) {
    base = b < paired
               ? layer.main.data() + ((size_t)row * paired + b) * 16 + 12
               : layer.tail4.data() +
                     ((size_t)row * cfg.tail4_blocks() + (b - paired)) * 4;
    idx = k;
  } else {
    base = layer.secondary.data() + ((size_t)row * cfg.blocks4() + b) * 4;
    idx = k - 8;
  }
  return (base[idx / 2] >> (idx % 2 ? 4 : 0)) & 0xFu;
}

uint16_t meta_at(const PackedLayer& layer, uint32_t row, uint32_t triple) {
  return layer.meta[(size_t)row * layer.cfg.triples() + triple];
}

void validate_layer(const PackedLayer& layer) {
  const LayerConfig& cfg = layer.cfg;
  if (cfg.n != 2 || cfg.n2 != 4 || cfg.group1 != kGroupSize ||
      cfg.tile != kTileChannels || cfg.group2 == 0)
    throw Error("layer: unsupported config constants");
  if (cfg.rows == 0 || cfg.cols == 0 || cfg.cols % kGroupSize != 0)
    throw Error("layer: rows/cols malformed");
  if (cfg.n4 > cfg.cols || cfg.n4 % kTileFourBit != 0)
    throw Error("layer: bad 4-bit channel count");
  if (cfg.pad2 != (kTileTwoBit - (cfg.cols - cfg.n4) % kTileTwoBit) % kTileTwoBit)
    throw Error("layer: bad pad count");
  validate_plan(layer.plan);
  if (layer.plan.in_channels != cfg.cols || layer.plan.n4 != cfg.n4 ||
      layer.plan.pad2 != cfg.pad2)
    throw Error("layer: plan disagrees with config");
  if (layer.main.size() != cfg.main_bytes() ||
      layer.tail2.size() != cfg.tail2_bytes() ||
      layer.tail4.size() != cfg.tail4_bytes() ||
      layer.secondary.size() != cfg.secondary_bytes() ||
      layer.meta.size() * 2 != cfg.meta_bytes() ||
      layer.sorder.size() != cfg.sorder_count() ||
      layer.fourbit.size() != cfg.fourbit_count())
    throw Error("layer: stream sizes disagree with config");
  for (const SorderParam& p : layer.sorder)
    if (p.zero2 > 15)
      throw Error("layer: second-order zero out of range");
  for (const FourBitParam& p : layer.fourbit)
    if (p.zero > 15)
      throw Error("layer: four-bit zero out of range");
  validate_csr(layer.csr, cfg.rows, cfg.padded_cols());
  if (layer.csr.nnz() != cfg.outlier_count)
    throw Error("layer: outlier count disagrees with config");
  for (uint16_t c : layer.csr.col_ind)
    if (c >= cfg.n2_padded() || layer.plan.perm[c] == kPadChannel)
      throw Error("layer: outlier outside the 2-bit region");
}

} // namespace qweight
