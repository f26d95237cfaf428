// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "qweight/outliers.hpp"
#include "qweight/plan.hpp"
#include "qweight/types.hpp"

namespace qweight {

// One 64-channel tile:
//   main bytes 0..11   48 2-bit codes, channel ascending, LSB-first
//                      (code k sits at bits [2(k%4), 2(k%4)+1] of byte k/4)
//   main bytes 12..15  4-bit codes, permuted channels 48..55, even channel in
//                      the low nibble
//   secondary 0..3     channels 56..63, same nibble rule
//   meta (u16, LSB first): 0-1 z0, 2-3 z1, 4-5 z2, 6-9 scode0 (4 bits),
//                      10-12 scode1, 13-15 scode2 (3 bits each)
struct PackedTile {
  std::array<uint8_t, 16> main{};
  std::array<uint8_t, 4> secondary{};
  uint16_t meta = 0;
  bool operator==(const PackedTile&) const = default;
};

// scodes arrive post-4/3/3: scodes[0] < 16, scodes[1], scodes[2] < 8
PackedTile pack_tile(std::span<const uint8_t> codes2,
                     std::span<const uint8_t> codes4,
                     std::span<const uint8_t> zeros,
                     std::span<const uint8_t> scodes);

struct TileFields {
  std::array<uint8_t, 48> codes2{};
  std::array<uint8_t, 16> codes4{};
  std::array<uint8_t, 3> zeros{};
  std::array<uint8_t, 3> scodes{};
};
TileFields unpack_tile(const PackedTile& tile);

uint16_t pack_meta(std::span<const uint8_t> zeros, std::span<const uint8_t> scodes);
void unpack_meta(uint16_t meta, std::span<uint8_t> zeros, std::span<uint8_t> scodes);

struct SorderParam {
  uint8_t zero2 = 0;   // 4-bit value padded to a byte
  uint16_t scale2 = 0; // fp16 bits
  bool operator==(const SorderParam&) const = default;
};

struct FourBitParam {
  uint16_t scale = 0; // fp16 bits
  uint8_t zero = 0;   // 4-bit value padded to a byte
  bool operator==(const FourBitParam&) const = default;
};

struct LayerConfig {
  uint16_t n = 2;    // 2-bit width of the low branch
  uint16_t n2 = 4;   // scale-code width
  uint16_t group1 = 16;
  uint16_t group2 = 16;
  uint16_t tile = 64;
  uint32_t rows = 0; // OC
  uint32_t cols = 0; // IC, pads excluded
  uint32_t n4 = 0;
  uint32_t pad2 = 0;
  uint32_t outlier_count = 0;
  float alpha = 0.0f;
  float outlier_ratio = 0.0f;
  bool operator==(const LayerConfig&) const = default;

  uint32_t n2_padded() const { return cols - n4 + pad2; }
  uint32_t padded_cols() const { return n2_padded() + n4; }
  uint32_t triples() const { return n2_padded() / kTileTwoBit; }      // T2
  uint32_t blocks4() const { return n4 / kTileFourBit; }              // T4
  uint32_t paired_tiles() const {
    return triples() < blocks4() ? triples() : blocks4();
  }
  uint32_t tail2_blocks() const { return triples() - paired_tiles(); }
  uint32_t tail4_blocks() const { return blocks4() - paired_tiles(); }
  uint32_t groups_per_row() const { return 3 * triples(); } // 2-bit groups
  uint32_t row_blocks() const { return (rows + group2 - 1) / group2; }

  // per-layer stream sizes in bytes
  uint64_t main_bytes() const { return (uint64_t)rows * paired_tiles() * 16; }
  uint64_t tail2_bytes() const { return (uint64_t)rows * tail2_blocks() * 12; }
  uint64_t tail4_bytes() const { return (uint64_t)rows * tail4_blocks() * 4; }
  uint64_t secondary_bytes() const { return (uint64_t)rows * blocks4() * 4; }
  uint64_t meta_bytes() const { return (uint64_t)rows * triples() * 2; }
  uint64_t sorder_count() const {
    return (uint64_t)row_blocks() * groups_per_row();
  }
  uint64_t sorder_bytes() const { return sorder_count() * 3; }
  uint64_t fourbit_count() const { return (uint64_t)rows * blocks4(); }
  uint64_t fourbit_bytes() const { return fourbit_count() * 3; }
};

// Logical (unpacked) per-layer content in the permuted geometry.
// scodes are stored post-4/3/3: full 4-bit code for group column j with
// j % 3 == 0, 3-bit code (4-bit code >> 1) otherwise.
struct LayerGroups {
  std::vector<uint8_t> codes2;       // rows x n2_padded
  std::vector<uint8_t> zeros2;       // rows x groups_per_row
  std::vector<uint8_t> scodes;       // rows x groups_per_row
  std::vector<SorderParam> sorder;   // row_blocks x groups_per_row
  std::vector<uint8_t> codes4;       // rows x n4
  std::vector<FourBitParam> fourbit; // rows x blocks4
};

struct PackedLayer {
  LayerConfig cfg;
  ChannelPlan plan;
  std::vector<uint8_t> main;      // rows x paired_tiles x 16
  std::vector<uint8_t> tail2;     // rows x tail2_blocks x 12
  std::vector<uint8_t> tail4;     // rows x tail4_blocks x 4 (first 8 codes)
  std::vector<uint8_t> secondary; // rows x blocks4 x 4 (last 8 codes)
  std::vector<uint16_t> meta;     // rows x triples
  std::vector<SorderParam> sorder;   // flat index b * groups_per_row + g
  std::vector<FourBitParam> fourbit; // flat index row * blocks4 + b
  CsrOutliers csr;
  bool operator==(const PackedLayer&) const = default;
};

PackedLayer pack_layer(const LayerConfig& cfg, const ChannelPlan& plan,
                       const LayerGroups& groups, CsrOutliers csr);
LayerGroups unpack_layer(const PackedLayer& layer);

// stream accessors used by the engine and tests
uint8_t code2_at(const PackedLayer& layer, uint32_t row, uint32_t pos);  // pos < n2_padded
uint8_t code4_at(const PackedLayer& layer, uint32_t row, uint32_t pos);  // pos < n4
uint16_t meta_at(const PackedLayer& layer, uint32_t row, uint32_t triple);

void validate_layer(const PackedLayer& layer); // structural checks, throws Error

} // namespace qweight
