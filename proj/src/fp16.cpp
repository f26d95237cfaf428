// SPDX-License-Identifier: Apache-2.0
#include "qweight/fp16.hpp"

#include <cstring>

namespace qweight {

uint16_t f32_to_f16(float f) {
  uint32_t x;
  std::memcpy(&x, &f, 4);
  uint32_t sign = (x >> 16) & 0x8000u;
  int32_t exp = (int32_t)((x >> 23) & 0xFFu) - 127 + 15;
  uint32_t man = x & 0x7FFFFFu;
  if (((x >> 23) & 0xFFu) == 0xFFu)
    return (uint16_t)(sign | 0x7C00u | (man ? 0x200u : 0u)); // inf / quieted nan
  if (exp >= 31)
    return (uint16_t)(sign | 0x7C00u); // overflow rounds to inf
  if (exp <= 0) {
    if (exp < -10)
      return (uint16_t)sign; // underflows to signed zero
    man |= 0x800000u;
    // drop sh bits of the 24-bit significand to reach a 10-bit subnormal
    uint32_t sh = (uint32_t)(1 - exp) + 13;
    uint32_t half = 1u << (sh - 1);
    uint32_t rest = man & ((1u << sh) - 1);
    uint32_t out = man >> sh;
    if (rest > half || (rest == half && (out & 1u)))
      out++;
    return (uint16_t)(sign | out);
  }
  uint32_t out = ((uint32_t)exp << 10) | (man >> 13);
  uint32_t rest = man & 0x1FFFu;
  // round to nearest even; a carry out of the mantissa walks into the
  // exponent and, from 0x7BFF, correctly lands on infinity
  if (rest > 0x1000u || (rest == 0x1000u && (out & 1u)))
    out++;
  return (uint16_t)(sign | out);
}

float f16_to_f32(uint16_t h) {
  uint32_t sign = (uint32_t)(h & 0x8000u) << 16;
  uint32_t exp = (h >> 10) & 0x1Fu;
  uint32_t man = h & 0x3FFu;
  uint32_t out;
  if (exp == 0) {
    if (man == 0) {
      out = sign;
    } else {
      int e = -1;
      do {
        e++;
        man <<= 1;
      } while (!(man & 0x400u));
      out = sign | ((uint32_t)(127 - 15 - e) << 23) | ((man & 0x3FFu) << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7F800000u | (man << 13);
  } else {
    out = sign | ((exp - 15 + 127) << 23) | (man << 13);
  }
  float f;
  std::memcpy(&f, &out, 4);
  return f;
}

} // namespace qweight
