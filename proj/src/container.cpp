// SPDX-License-Identifier: Apache-2.0
#include "qweight/container.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace qweight {

namespace {

constexpr char kMagic[4] = {'Q', 'W', 'L', '1'};
constexpr uint16_t kVersion = 1;
constexpr size_t kSectionCount = 12;

struct Writer {
  std::vector<uint8_t> bytes;
  void u8(uint8_t v) { bytes.push_back(v); }
  void u16(uint16_t v) {
    bytes.push_back((uint8_t)v);
    bytes.push_back((uint8_t)(v >> 8));
  }
  void u32(uint32_t v) {
    u16((uint16_t)v);
    u16((uint16_t)(v >> 16));
  }
  void u64(uint64_t v) {
    u32((uint32_t)v);
    u32((uint32_t)(v >> 32));
  }
  void f32(float v) {
    uint32_t raw;
    std::memcpy(&raw, &v, 4);
    u32(raw);
  }
};

struct Reader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
  std::string where;
  void need(size_t n) {
    if (pos + n > bytes.size())
      throw Error("container: truncated " + where);
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = (uint16_t)(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    uint32_t lo = u16();
    return lo | ((uint32_t)u16() << 16);
  }
  uint64_t u64() {
    uint64_t lo = u32();
    return lo | ((uint64_t)u32() << 32);
  }
  float f32() {
    uint32_t raw = u32();
    float v;
    std::memcpy(&v, &raw, 4);
    return v;
  }
};

const std::array<uint32_t, 256>& crc_table() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  return table;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes((size_t)size);
  if (size > 0)
    in.read((char*)bytes.data(), size);
  if (!in)
    throw Error("failed to read " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot open " + path + " for writing");
  out.write((const char*)bytes.data(), (std::streamsize)bytes.size());
  if (!out)
    throw Error("failed to write " + path);
}

// section payload encoders, order fixed by SectionId
std::vector<uint8_t> encode_section(const PackedLayer& layer, SectionId id) {
  Writer w;
  const LayerConfig& cfg = layer.cfg;
  switch (id) {
  case SectionId::PlanBits: {
    w.bytes.assign((cfg.cols + 7) / 8, 0);
    for (uint32_t c = 0; c < cfg.cols; ++c)
      if (layer.plan.bits[c] == 4)
        w.bytes[c / 8] = (uint8_t)(w.bytes[c / 8] | (1u << (c % 8)));
    break;
  }
  case SectionId::PlanPerm:
    for (uint32_t slot : layer.plan.perm)
      w.u32(slot);
    break;
  case SectionId::Main:
    w.bytes = layer.main;
    break;
  case SectionId::Tail2:
    w.bytes = layer.tail2;
    break;
  case SectionId::Tail4:
    w.bytes = layer.tail4;
    break;
  case SectionId::Secondary:
    w.bytes = layer.secondary;
    break;
  case SectionId::Meta:
    for (uint16_t m : layer.meta)
      w.u16(m);
    break;
  case SectionId::Sorder:
    for (const SorderParam& p : layer.sorder) {
      w.u8(p.zero2);
      w.u16(p.scale2);
    }
    break;
  case SectionId::FourBit:
    for (const FourBitParam& p : layer.fourbit) {
      w.u16(p.scale);
      w.u8(p.zero);
    }
    break;
  case SectionId::CsrRowPtr:
    // an outlier-free layer carries no sparse matrix at all
    if (layer.csr.nnz() != 0)
      for (uint32_t v : layer.csr.row_ptr)
        w.u32(v);
    break;
  case SectionId::CsrColInd:
    for (uint16_t v : layer.csr.col_ind)
      w.u16(v);
    break;
  case SectionId::CsrValues:
    for (uint16_t v : layer.csr.values)
      w.u16(v);
    break;
  }
  return w.bytes;
}

void decode_section(PackedLayer& layer, SectionId id,
                    std::span<const uint8_t> bytes) {
  Reader r{bytes, 0, std::string("section ") + section_name(id)};
  const LayerConfig& cfg = layer.cfg;
  switch (id) {
  case SectionId::PlanBits: {
    layer.plan.bits.assign(cfg.cols, 2);
    r.need((cfg.cols + 7) / 8);
    for (uint32_t c = 0; c < cfg.cols; ++c)
      if (bytes[c / 8] & (1u << (c % 8)))
        layer.plan.bits[c] = 4;
    r.pos = (cfg.cols + 7) / 8;
    break;
  }
  case SectionId::PlanPerm:
    layer.plan.perm.resize(cfg.padded_cols());
    for (uint32_t& slot : layer.plan.perm)
      slot = r.u32();
    break;
  case SectionId::Main:
    layer.main.assign(bytes.begin(), bytes.end());
    r.pos = bytes.size();
    break;
  case SectionId::Tail2:
    layer.tail2.assign(bytes.begin(), bytes.end());
    r.pos = bytes.size();
    break;
  case SectionId::Tail4:
    layer.tail4.assign(bytes.begin(), bytes.end());
    r.pos = bytes.size();
    break;
  case SectionId::Secondary:
    layer.secondary.assign(bytes.begin(), bytes.end());
    r.pos = bytes.size();
    break;
  case SectionId::Meta:
    layer.meta.resize(bytes.size() / 2);
    for (uint16_t& m : layer.meta)
      m = r.u16();
    break;
  case SectionId::Sorder:
    layer.sorder.resize(bytes.size() / 3);
    for (SorderParam& p : layer.sorder) {
      p.zero2 = r.u8();
      p.scale2 = r.u16();
    }
    break;
  case SectionId::FourBit:
    layer.fourbit.resize(bytes.size() / 3);
    for (FourBitParam& p : layer.fourbit) {
      p.scale = r.u16();
      p.zero = r.u8();
    }
    break;
  case SectionId::CsrRowPtr:
    if (bytes.empty()) { // no outliers stored; rebuild the empty row index
      layer.csr.row_ptr.assign((size_t)layer.cfg.rows + 1, 0);
      break;
    }
    layer.csr.row_ptr.resize(bytes.size() / 4);
    for (uint32_t& v : layer.csr.row_ptr)
      v = r.u32();
    break;
  case SectionId::CsrColInd:
    layer.csr.col_ind.resize(bytes.size() / 2);
    for (uint16_t& v : layer.csr.col_ind)
      v = r.u16();
    break;
  case SectionId::CsrValues:
    layer.csr.values.resize(bytes.size() / 2);
    for (uint16_t& v : layer.csr.values)
      v = r.u16();
    break;
  }
  if (r.pos != bytes.size())
    throw Error("container: section " + std::string(section_name(id)) +
                " has unexpected length");
}

uint64_t expected_section_length(const LayerConfig& cfg, SectionId id) {
  switch (id) {
  case SectionId::PlanBits:
    return (cfg.cols + 7) / 8;
  case SectionId::PlanPerm:
    return (uint64_t)cfg.padded_cols() * 4;
  case SectionId::Main:
    return cfg.main_bytes();
  case SectionId::Tail2:
    return cfg.tail2_bytes();
  case SectionId::Tail4:
    return cfg.tail4_bytes();
  case SectionId::Secondary:
    return cfg.secondary_bytes();
  case SectionId::Meta:
    return cfg.meta_bytes();
  case SectionId::Sorder:
    return cfg.sorder_bytes();
  case SectionId::FourBit:
    return cfg.fourbit_bytes();
  case SectionId::CsrRowPtr:
    return cfg.outlier_count ? ((uint64_t)cfg.rows + 1) * 4 : 0;
  case SectionId::CsrColInd:
  case SectionId::CsrValues:
    return (uint64_t)cfg.outlier_count * 2;
  }
  throw Error("container: unknown section id");
}

} // namespace

const char* section_name(SectionId id) {
  switch (id) {
  case SectionId::PlanBits:
    return "plan_bits";
  case SectionId::PlanPerm:
    return "plan_perm";
  case SectionId::Main:
    return "main";
  case SectionId::Tail2:
    return "tail2";
  case SectionId::Tail4:
    return "tail4";
  case SectionId::Secondary:
    return "secondary";
  case SectionId::Meta:
    return "meta";
  case SectionId::Sorder:
    return "sorder";
  case SectionId::FourBit:
    return "fourbit";
  case SectionId::CsrRowPtr:
    return "csr_row_ptr";
  case SectionId::CsrColInd:
    return "csr_col_ind";
  case SectionId::CsrValues:
    return "csr_values";
  }
  return "unknown";
}

uint32_t crc32(std::span<const uint8_t> bytes) {
  const auto& table = crc_table();
  uint32_t c = 0xFFFFFFFFu;
  for (uint8_t b : bytes)
    c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> serialize_packed_layer(const PackedLayer& layer) {
  validate_layer(layer);
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u16(kVersion);
  w.u16(0); // flags
  const LayerConfig& cfg = layer.cfg;
  w.u16(cfg.n);
  w.u16(cfg.n2);
  w.u16(cfg.group1);
  w.u16(cfg.group2);
  w.u16(cfg.tile);
  w.u16(0); // reserved
  w.u32(cfg.rows);
  w.u32(cfg.cols);
  w.u32(cfg.n4);
  w.u32(cfg.pad2);
  w.u32(cfg.outlier_count);
  w.f32(cfg.alpha);
  w.f32(cfg.outlier_ratio);

  std::vector<std::vector<uint8_t>> payloads;
  payloads.reserve(kSectionCount);
  for (uint32_t id = 1; id <= kSectionCount; ++id)
    payloads.push_back(encode_section(layer, (SectionId)id));

  w.u32((uint32_t)kSectionCount);
  uint64_t offset = w.bytes.size() + kSectionCount * 20;
  for (uint32_t id = 1; id <= kSectionCount; ++id) {
    w.u32(id);
    w.u64(offset);
    w.u64(payloads[id - 1].size());
    offset += payloads[id - 1].size();
  }
  for (const auto& p : payloads)
    w.bytes.insert(w.bytes.end(), p.begin(), p.end());
  w.u32(crc32(std::span<const uint8_t>(w.bytes)));
  return w.bytes;
}

PackedLayer deserialize_packed_layer(std::span<const uint8_t> bytes,
                                     bool strict) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error("container: bad magic");
  if (bytes.size() < 48 + 4 + kSectionCount * 20 + 4)
    throw Error("container: truncated header");
  if (strict &&
      crc32(bytes.subspan(0, bytes.size() - 4)) !=
          (uint32_t)(bytes[bytes.size() - 4] | (bytes[bytes.size() - 3] << 8) |
                     (bytes[bytes.size() - 2] << 16) |
                     ((uint32_t)bytes[bytes.size() - 1] << 24)))
    throw Error("container: checksum mismatch");

  Reader r{bytes, 4, "header"};
  const uint16_t version = r.u16();
  if (version != kVersion)
    throw Error("container: unsupported version");
  r.u16(); // flags

  PackedLayer layer;
  LayerConfig& cfg = layer.cfg;
  cfg.n = r.u16();
  cfg.n2 = r.u16();
  cfg.group1 = r.u16();
  cfg.group2 = r.u16();
  cfg.tile = r.u16();
  r.u16();
  cfg.rows = r.u32();
  cfg.cols = r.u32();
  cfg.n4 = r.u32();
  cfg.pad2 = r.u32();
  cfg.outlier_count = r.u32();
  cfg.alpha = r.f32();
  cfg.outlier_ratio = r.f32();
  if (cfg.cols == 0 || cfg.cols % kGroupSize != 0 || cfg.n4 > cfg.cols ||
      cfg.group2 == 0 || cfg.rows == 0)
    throw Error("container: malformed config");

  const uint32_t count = r.u32();
  if (count != kSectionCount)
    throw Error("container: unexpected section count");
  std::vector<SectionInfo> table(count);
  for (SectionInfo& s : table) {
    s.id = r.u32();
    s.offset = r.u64();
    s.length = r.u64();
  }
  uint64_t end = r.pos;
  for (uint32_t id = 1; id <= kSectionCount; ++id) {
    const SectionInfo& s = table[id - 1];
    if (s.id != id)
      throw Error("container: section table out of order");
    if (s.offset != end)
      throw Error("container: section offsets not contiguous");
    if (s.length != expected_section_length(cfg, (SectionId)id))
      throw Error("container: section " +
                  std::string(section_name((SectionId)id)) +
                  " has unexpected length");
    if (s.offset + s.length + 4 > bytes.size())
      throw Error("container: truncated section " +
                  std::string(section_name((SectionId)id)));
    end = s.offset + s.length;
  }
  if (end + 4 != bytes.size())
    throw Error("container: trailing bytes after sections");

  layer.plan.in_channels = cfg.cols;
  layer.plan.n4 = cfg.n4;
  layer.plan.pad2 = cfg.pad2;
  for (uint32_t id = 1; id <= kSectionCount; ++id)
    decode_section(layer, (SectionId)id,
                   bytes.subspan(table[id - 1].offset, table[id - 1].length));
  if (strict)
    validate_layer(layer);
  return layer;
}

std::vector<uint8_t> encode_layer_section(const PackedLayer& layer,
                                          SectionId id) {
  return encode_section(layer, id);
}

void write_packed_layer(const PackedLayer& layer, const std::string& path) {
  write_file(path, serialize_packed_layer(layer));
}

PackedLayer read_packed_layer(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  return deserialize_packed_layer(bytes);
}

std::vector<SectionInfo> read_section_table(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  deserialize_packed_layer(bytes); // full validation incl. CRC
  Reader r{bytes, 48, "section table"};
  const uint32_t count = r.u32();
  std::vector<SectionInfo> table(count);
  for (SectionInfo& s : table) {
    s.id = r.u32();
    s.offset = r.u64();
    s.length = r.u64();
  }
  return table;
}

uint64_t payload_bytes(const PackedLayer& layer) {
  uint64_t total = 0;
  for (uint32_t id = 3; id <= kSectionCount; ++id) // plan sections excluded
    total += expected_section_length(layer.cfg, (SectionId)id);
  return total;
}

WeightMatrix load_weights(const std::string& path, uint32_t rows,
                          uint32_t cols) {
  if (rows == 0 || cols == 0)
    throw Error("load_weights: rows and cols must be positive");
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() != (size_t)rows * cols * 4)
    throw Error("load_weights: file size does not match rows x cols");
  WeightMatrix w;
  w.rows = rows;
  w.cols = cols;
  w.data.resize((size_t)rows * cols);
  std::memcpy(w.data.data(), bytes.data(), bytes.size());
  for (float v : w.data)
    if (!std::isfinite(v))
      throw Error("load_weights: non-finite value");
  return w;
}

CalibrationVector load_calibration(const std::string& path, uint32_t cols) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() != (size_t)cols * 4)
    throw Error("load_calibration: file size does not match cols");
  CalibrationVector h;
  h.h.resize(cols);
  std::memcpy(h.h.data(), bytes.data(), bytes.size());
  for (float v : h.h)
    if (!(v > 0.0f) || !std::isfinite(v))
      throw Error("load_calibration: entries must be positive and finite");
  return h;
}

CalibrationVector identity_calibration(uint32_t cols) {
  CalibrationVector h;
  h.h.assign(cols, 1.0f);
  return h;
}

void write_f32(const std::string& path, std::span<const float> values) {
  std::vector<uint8_t> bytes(values.size() * 4);
  std::memcpy(bytes.data(), values.data(), bytes.size());
  write_file(path, bytes);
}

std::vector<float> read_f32(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() % 4 != 0)
    throw Error("read_f32: size not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

} // namespace qweight
