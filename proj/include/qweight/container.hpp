// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qweight/bitpack.hpp"
#include "qweight/types.hpp"

namespace qweight {

// Raw little-endian f32 matrix / vector loaders. Sizes must match exactly;
// non-finite values are rejected.
WeightMatrix load_weights(const std::string& path, uint32_t rows, uint32_t cols);
CalibrationVector load_calibration(const std::string& path, uint32_t cols);
CalibrationVector identity_calibration(uint32_t cols);
void write_f32(const std::string& path, std::span<const float> values);
std::vector<float> read_f32(const std::string& path);

// Packed container "QWL1": magic, version, config block, section table,
// section payloads, trailing CRC32 over everything before the checksum.
// All integers little-endian.
enum class SectionId : uint32_t {
  PlanBits = 1,
  PlanPerm = 2,
  Main = 3,
  Tail2 = 4,
  Tail4 = 5,
  Secondary = 6,
  Meta = 7,
  Sorder = 8,
  FourBit = 9,
  CsrRowPtr = 10,
  CsrColInd = 11,
  CsrValues = 12,
};
const char* section_name(SectionId id);

struct SectionInfo {
  uint32_t id = 0;
  uint64_t offset = 0;
  uint64_t length = 0;
};

std::vector<uint8_t> serialize_packed_layer(const PackedLayer& layer);
void write_packed_layer(const PackedLayer& layer, const std::string& path);
PackedLayer read_packed_layer(const std::string& path);
// strict = false skips the CRC and the final structural validation so that
// corrupted files can still be inspected section by section
PackedLayer deserialize_packed_layer(std::span<const uint8_t> bytes,
                                     bool strict = true);

// canonical byte encoding of one section (used by verify to localize damage)
std::vector<uint8_t> encode_layer_section(const PackedLayer& layer, SectionId id);

// section table of an existing file (validates magic/version/CRC)
std::vector<SectionInfo> read_section_table(const std::string& path);

// bytes belonging to weight-payload sections (everything but plan sections)
uint64_t payload_bytes(const PackedLayer& layer);

uint32_t crc32(std::span<const uint8_t> bytes);

} // namespace qweight
