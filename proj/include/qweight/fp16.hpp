// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace qweight {

// IEEE 754 binary16 carried around as raw bits. Conversion uses
// round-to-nearest-even and keeps subnormals, so results match hardware
// half-precision converters bit for bit.
uint16_t f32_to_f16(float f);
float f16_to_f32(uint16_t h);

} // namespace qweight
