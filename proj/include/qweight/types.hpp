// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qweight {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Row-major float32 weight matrix, rows = output channels,
// cols = input channels.
struct WeightMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> data;

  float at(uint32_t r, uint32_t c) const { return data[(size_t)r * cols + c]; }
  float& at(uint32_t r, uint32_t c) { return data[(size_t)r * cols + c]; }
  bool valid() const { return data.size() == (size_t)rows * cols; }
};

// Per-input-channel calibration norms (diagonal Hessian proxy), strictly
// positive, length = input channels.
struct CalibrationVector {
  std::vector<float> h;
};

} // namespace qweight
