// core.hpp - units, physical constants, error types and seeded randomness
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace shb {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018
inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kBoltzmann = 1.380649e-23;    // J/K
inline constexpr double kBohrMagneton = 9.2740100783e-24;  // J/T
inline constexpr double kMu0Over4Pi = 1e-7;           // T m / A

// Frequencies are angular internally; these convert at the I/O boundary.
inline constexpr double hz(double f) { return kTwoPi * f; }
inline constexpr double khz(double f) { return kTwoPi * 1e3 * f; }
inline constexpr double mhz(double f) { return kTwoPi * 1e6 * f; }
inline constexpr double ghz(double f) { return kTwoPi * 1e9 * f; }
inline constexpr double to_hz(double w) { return w / kTwoPi; }
inline constexpr double to_khz(double w) { return w / (kTwoPi * 1e3); }

// ------- Errors -------
// The CLI maps ValidationError to exit 2 and the numerical family to exit 3.

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : ValidationError {
    using ValidationError::ValidationError;
};

struct SizeError : ValidationError {
    using ValidationError::ValidationError;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitError : NumericalError {
    using NumericalError::NumericalError;
};

// Largest bath allowed: 2^(Ns+1) <= 8192.
inline constexpr int kMaxNuclei = 12;

inline void check_bath_size(int ns) {
    if (ns < 1 || ns > kMaxNuclei)
        throw SizeError("bath size Ns=" + std::to_string(ns) + " outside [1, " +
                        std::to_string(kMaxNuclei) + "]");
}

// ------- Randomness -------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for the k-th independent stream derived from a scenario seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t k) {
    return splitmix64(splitmix64(seed) ^ (0xd1b54a32d192ed03ULL * (k + 1)));
}

// std::mt19937_64 is fully specified by the standard; the uniform and normal
// mappings are written out because std distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; one draw per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace shb
