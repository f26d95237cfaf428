// SPDX-License-Identifier: Apache-2.0
#include "qweight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace qweight {

WeightMatrix synth_gaussian(uint32_t rows, uint32_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  WeightMatrix w;
  w.rows = rows;
  w.cols = cols;
  w.data.resize((size_t)rows * cols);
  for (float& v : w.data)
    v = dist(rng);
  return w;
}

void plant_outliers(WeightMatrix& w, double ratio, float scale, uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw Error("plant_outliers: ratio must lie in [0, 1]");
  const size_t count = (size_t)std::llround(ratio * (double)w.data.size());
  if (count == 0)
    return;
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<size_t> idx(w.data.size());
  std::iota(idx.begin(), idx.end(), (size_t)0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<float> mag(scale, 2.0f * scale);
  std::bernoulli_distribution sign(0.5);
  for (size_t i = 0; i < count; ++i)
    w.data[idx[i]] = sign(rng) ? mag(rng) : -mag(rng);
}

CalibrationVector synth_calibration(uint32_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ull);
  std::normal_distribution<float> dist(1.0f, 0.25f);
  CalibrationVector h;
  h.h.resize(cols);
  for (float& v : h.h)
    v = std::fabs(dist(rng)) + 0.05f;
  return h;
}

std::vector<float> synth_activation(uint32_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xA0761D6478BD642Full);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> x(cols);
  for (float& v : x)
    v = dist(rng);
  return x;
}

} // namespace qweight
