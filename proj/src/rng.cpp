#include "polyfwd/rng.hpp"

#include <cmath>

namespace polyfwd::rng {

namespace {

constexpr int kLayers = 128;
// Rightmost layer edge and per-layer area for the 128-layer normal ziggurat.
constexpr double kR = 3.442619855899;
constexpr double kV = 9.91256303526217e-3;

struct ZigTables {
  double x[kLayers + 1];
  double ratio[kLayers];  // x[i+1]/x[i], the fast acceptance threshold
  ZigTables() {
    const double f = std::exp(-0.5 * kR * kR);
    x[0] = kV / f;  // base strip extends past kR to hold the tail area
    x[1] = kR;
    x[kLayers] = 0.0;
    for (int i = 2; i < kLayers; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(kV / x[i - 1] +
                                       std::exp(-0.5 * x[i - 1] * x[i - 1])));
    }
    for (int i = 0; i < kLayers; ++i) ratio[i] = x[i + 1] / x[i];
  }
};

const ZigTables& tables() {
  static const ZigTables t;
  return t;
}

}  // namespace

double NormalSampler::operator()() {
  const ZigTables& t = tables();
  for (;;) {
    // One 64-bit draw provides the layer (low 7 bits) and a signed uniform
    // (top 53 bits); the bit ranges do not overlap.
    const std::uint64_t bits = gen_();
    const int layer = static_cast<int>(bits & 0x7F);
    const double u =
        static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;  // (-1, 1)
    if (std::fabs(u) < t.ratio[layer]) return u * t.x[layer];
    if (layer == 0) return sample_tail(u < 0.0);
    const double xx = u * t.x[layer];
    const double f0 =
        std::exp(-0.5 * (t.x[layer] * t.x[layer] - xx * xx));
    const double f1 =
        std::exp(-0.5 * (t.x[layer + 1] * t.x[layer + 1] - xx * xx));
    if (f1 + gen_.uniform01() * (f0 - f1) < 1.0) return xx;
  }
}

double NormalSampler::sample_tail(bool negative) {
  // Marsaglia tail method for |x| > kR.
  double x, y;
  do {
    x = std::log(1.0 - gen_.uniform01()) / kR;  // log of U in (0,1]
    y = std::log(1.0 - gen_.uniform01());
  } while (-2.0 * y < x * x);
  return negative ? x - kR : kR - x;
}

}  // namespace polyfwd::rng
