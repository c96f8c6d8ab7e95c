#pragma once

// Batch-size latency law for the mock upstream:
//
//   T(bs) = base_ms * fixed_fraction + base_ms * (1 - fixed_fraction) * bs^exponent
//
// fixed_fraction > 0 or exponent < 1 gives the sub-linear scaling where
// batching pays off; fixed_fraction = 0, exponent = 1 is the linear
// baseline whose per-inference time is constant. Noise is multiplicative
// lognormal with unit mean, so T(1) keeps mean base_ms.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace batchgate {

struct LatencyModel {
  double base_ms = 125.0;
  double fixed_fraction = 0.6;
  double exponent = 1.0;
  double noise_cv = 0.1;

  // Deterministic mean latency for a batch of `bs` requests.
  double mean_ms(int bs) const {
    if (bs < 1) throw std::invalid_argument("mean_ms: bs must be >= 1");
    return base_ms * fixed_fraction +
           base_ms * (1.0 - fixed_fraction) * std::pow(static_cast<double>(bs), exponent);
  }
};

// Unit-mean lognormal multiplier with coefficient of variation `cv`.
inline double lognormal_noise(double cv, std::mt19937_64& rng) {
  if (cv <= 0) return 1.0;
  const double sigma2 = std::log(1.0 + cv * cv);
  const double sigma = std::sqrt(sigma2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  return std::exp(sigma * gauss(rng) - sigma2 / 2.0);
}

inline double service_time(const LatencyModel& model, int bs, std::mt19937_64& rng) {
  return model.mean_ms(bs) * lognormal_noise(model.noise_cv, rng);
}

// Presets seeded from published single-request baselines; the batch-scaling
// parameters are qualitative knobs, not measured ground truth.
inline std::optional<LatencyModel> latency_preset(const std::string& name) {
  LatencyModel m;
  if (name == "iris") m.base_ms = 8;
  else if (name == "toxic") m.base_ms = 40;
  else if (name == "mnist") m.base_ms = 125;
  else if (name == "mobilenet") m.base_ms = 83;
  else if (name == "resnet") m.base_ms = 204;
  else if (name == "onnx_resnet50") m.base_ms = 201;
  else return std::nullopt;
  return m;
}

}  // namespace batchgate
