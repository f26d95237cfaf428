// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared helpers for the test binaries. Kept doctest-free so the acceptance
// runner (plain main) can reuse them.

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qweight/bitpack.hpp"
#include "qweight/outliers.hpp"
#include "qweight/plan.hpp"
#include "qweight/types.hpp"

namespace qtest {

// 22-byte wire image of one tile: main | secondary | meta little-endian
inline std::vector<uint8_t> tile_bytes(const qweight::PackedTile& t) {
  std::vector<uint8_t> b(t.main.begin(), t.main.end());
  b.insert(b.end(), t.secondary.begin(), t.secondary.end());
  b.push_back((uint8_t)(t.meta & 0xff));
  b.push_back((uint8_t)(t.meta >> 8));
  return b;
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + p.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

// hand-built plan: 2-bit side = first ic-n4 original channels ascending,
// 4-bit side = last n4; pads in between
inline qweight::ChannelPlan manual_plan(uint32_t ic, uint32_t n4) {
  qweight::ChannelPlan p;
  p.in_channels = ic;
  p.n4 = n4;
  const uint32_t n2 = ic - n4;
  p.pad2 = (qweight::kTileTwoBit - n2 % qweight::kTileTwoBit) %
           qweight::kTileTwoBit;
  p.bits.assign(ic, 2);
  for (uint32_t c = n2; c < ic; ++c)
    p.bits[c] = 4;
  p.perm.reserve(p.padded_channels());
  for (uint32_t c = 0; c < n2; ++c)
    p.perm.push_back(c);
  p.perm.insert(p.perm.end(), p.pad2, qweight::kPadChannel);
  for (uint32_t c = n2; c < ic; ++c)
    p.perm.push_back(c);
  return p;
}

inline qweight::LayerConfig make_cfg(const qweight::ChannelPlan& plan,
                                     uint32_t rows) {
  qweight::LayerConfig cfg;
  cfg.rows = rows;
  cfg.cols = plan.in_channels;
  cfg.n4 = plan.n4;
  cfg.pad2 = plan.pad2;
  return cfg;
}

// random but structurally valid layer content (codes need not come from any
// real quantization; pack/unpack must round-trip them regardless)
inline qweight::LayerGroups random_groups(const qweight::LayerConfig& cfg,
                                          std::mt19937_64& rng) {
  auto pick = [&](int hi) {
    return (uint8_t)std::uniform_int_distribution<int>(0, hi)(rng);
  };
  qweight::LayerGroups g;
  g.codes2.resize((size_t)cfg.rows * cfg.n2_padded());
  for (auto& c : g.codes2)
    c = pick(3);
  g.zeros2.resize((size_t)cfg.rows * cfg.groups_per_row());
  for (auto& z : g.zeros2)
    z = pick(3);
  g.scodes.resize((size_t)cfg.rows * cfg.groups_per_row());
  for (size_t i = 0; i < g.scodes.size(); ++i) {
    const uint32_t j = (uint32_t)(i % cfg.groups_per_row());
    g.scodes[i] = (j % 3 == 0) ? pick(15) : pick(7);
  }
  g.sorder.resize(cfg.sorder_count());
  for (auto& s : g.sorder) {
    s.zero2 = pick(15);
    s.scale2 = (uint16_t)std::uniform_int_distribution<int>(0, 0x7bff)(rng);
  }
  g.codes4.resize((size_t)cfg.rows * cfg.n4);
  for (auto& c : g.codes4)
    c = pick(15);
  g.fourbit.resize(cfg.fourbit_count());
  for (auto& f : g.fourbit) {
    f.scale = (uint16_t)std::uniform_int_distribution<int>(0, 0x7bff)(rng);
    f.zero = pick(15);
  }
  return g;
}

// random CSR over real (non-pad) 2-bit slots, sorted, strictly increasing
// columns per row
inline qweight::CsrOutliers random_csr(const qweight::ChannelPlan& plan,
                                       uint32_t rows, std::mt19937_64& rng) {
  qweight::CsrOutliers csr;
  csr.row_ptr.assign((size_t)rows + 1, 0);
  const uint32_t n2 = plan.n2(); // real slots sit at permuted cols [0, n2)
  std::uniform_int_distribution<int> howmany(0, 3);
  std::uniform_int_distribution<uint32_t> where(0, n2 ? n2 - 1 : 0);
  for (uint32_t r = 0; r < rows; ++r) {
    int k = n2 ? howmany(rng) : 0;
    std::vector<uint32_t> cols;
    for (int i = 0; i < k; ++i)
      cols.push_back(where(rng));
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (uint32_t c : cols) {
      csr.col_ind.push_back((uint16_t)c);
      csr.values.push_back(
          (uint16_t)std::uniform_int_distribution<int>(0, 0x7bff)(rng));
      csr.row_ptr[r + 1]++;
    }
  }
  for (uint32_t r = 0; r < rows; ++r)
    csr.row_ptr[r + 1] += csr.row_ptr[r];
  return csr;
}

inline bool groups_equal(const qweight::LayerGroups& a,
                         const qweight::LayerGroups& b) {
  return a.codes2 == b.codes2 && a.zeros2 == b.zeros2 && a.scodes == b.scodes &&
         a.sorder == b.sorder && a.codes4 == b.codes4 && a.fourbit == b.fourbit;
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  auto base = std::filesystem::temp_directory_path();
  std::filesystem::path dir;
  for (int i = 0;; ++i) {
    dir = base / (tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(i));
    if (!std::filesystem::exists(dir))
      break;
  }
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace qtest
