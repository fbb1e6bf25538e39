#include "mvs/noise.h"

#include <cmath>

namespace mvs {

uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice_value(uint64_t seed, int64_t ix, int64_t iy, uint32_t channel,
                     uint32_t octave) {
  uint64_t h = hash_mix(seed ^ hash_mix(static_cast<uint64_t>(ix)) ^
                        hash_mix(static_cast<uint64_t>(iy) * 0x5851f42d4c957f2dull) ^
                        hash_mix((static_cast<uint64_t>(channel) << 32) | octave));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // 2^53
}

double value_noise(uint64_t seed, double x, double y, uint32_t channel,
                   uint32_t octave) {
  double fx = std::floor(x), fy = std::floor(y);
  int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  double tx = x - fx, ty = y - fy;
  double sx = tx * tx * (3.0 - 2.0 * tx);
  double sy = ty * ty * (3.0 - 2.0 * ty);
  double v00 = lattice_value(seed, ix, iy, channel, octave);
  double v01 = lattice_value(seed, ix + 1, iy, channel, octave);
  double v10 = lattice_value(seed, ix, iy + 1, channel, octave);
  double v11 = lattice_value(seed, ix + 1, iy + 1, channel, octave);
  return (1 - sy) * ((1 - sx) * v00 + sx * v01) + sy * ((1 - sx) * v10 + sx * v11);
}

double fractal_noise(uint64_t seed, double x, double y, uint32_t channel,
                     int octaves) {
  double total = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    total += amp * value_noise(seed, x * freq, y * freq, channel,
                               static_cast<uint32_t>(o));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return total / norm;
}

}  // namespace mvs
