// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "qweight/types.hpp"

namespace qweight {

// Seeded synthetic inputs so the whole pipeline runs without model files.
WeightMatrix synth_gaussian(uint32_t rows, uint32_t cols, uint64_t seed);

// overwrite ~ratio of entries with large-magnitude values (uniform sign),
// |value| in [scale, 2*scale]
void plant_outliers(WeightMatrix& w, double ratio, float scale, uint64_t seed);

// positive per-channel norms around 1
CalibrationVector synth_calibration(uint32_t cols, uint64_t seed);

std::vector<float> synth_activation(uint32_t cols, uint64_t seed);

} // namespace qweight
