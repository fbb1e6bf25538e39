#pragma once

#include <cstdint>

namespace mvs {

/// splitmix64 finalizer; the basis of all procedural randomness here so that
/// rendering is bit-reproducible across platforms.
uint64_t hash_mix(uint64_t x);

/// Deterministic lattice value in [0,1] at integer coordinates.
double lattice_value(uint64_t seed, int64_t ix, int64_t iy, uint32_t channel,
                     uint32_t octave);

/// Smoothstep-interpolated value noise in [0,1]; C1 in (x,y).
double value_noise(uint64_t seed, double x, double y, uint32_t channel,
                   uint32_t octave);

/// Multi-octave value noise in [0,1] (amplitudes halve per octave).
double fractal_noise(uint64_t seed, double x, double y, uint32_t channel,
                     int octaves);

}  // namespace mvs
