#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace timbre {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define TIMBRE_DEFINE_ERROR(Name) \
  struct Name : Error {           \
    using Error::Error;           \
  }

TIMBRE_DEFINE_ERROR(EmptyAudio);
TIMBRE_DEFINE_ERROR(ShortAudio);
TIMBRE_DEFINE_ERROR(ShapeError);
TIMBRE_DEFINE_ERROR(SizeError);
TIMBRE_DEFINE_ERROR(PadError);
TIMBRE_DEFINE_ERROR(InsufficientData);
TIMBRE_DEFINE_ERROR(ConfigError);
TIMBRE_DEFINE_ERROR(UnknownDomain);
TIMBRE_DEFINE_ERROR(MissingStats);
TIMBRE_DEFINE_ERROR(NanGradient);
TIMBRE_DEFINE_ERROR(NonFiniteLoss);
TIMBRE_DEFINE_ERROR(NumericalError);
TIMBRE_DEFINE_ERROR(VersionError);
TIMBRE_DEFINE_ERROR(ChecksumError);
TIMBRE_DEFINE_ERROR(FormatError);
TIMBRE_DEFINE_ERROR(IoError);

#undef TIMBRE_DEFINE_ERROR

// Deterministic RNG used everywhere randomness is needed. Hand-rolled
// distributions so that output streams are stable across standard library
// versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // splitmix warm-up so nearby seeds diverge immediately
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // standard normal via Box-Muller (no cached spare, for replayability)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  // independent substream, replayable without serializing engine state
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0x6a09e667f3bcc909ULL + stream * 0x3c6ef372fe94f82aULL));
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace timbre
