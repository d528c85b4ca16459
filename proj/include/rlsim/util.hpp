#pragma once

#include <cstdint>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace rlsim {

// FNV-1a 64-bit, used for seed derivation and output provenance hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

// Deterministic RNG. Sampling is implemented in-house (Box-Muller etc.) so
// that sequences do not depend on the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                       // [0,1)
    double uniform(double lo, double hi);
    int uniform_int(int lo, int hi);        // inclusive bounds
    double normal(double mean = 0.0, double stddev = 1.0);
    double lognormal(double mu, double sigma);

private:
    std::uint64_t state_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from the RLSIM_LOG environment variable (error|warn|info|debug).
LogLevel log_level();
void log_msg(LogLevel level, const std::string& msg);

inline bool nearly_equal(double a, double b, double rel = 1e-9, double abs = 1e-12) {
    return std::fabs(a - b) <= std::max(abs, rel * std::max(std::fabs(a), std::fabs(b)));
}

// Fixed formatting for floats in machine-readable output; keeps run outputs
// byte-stable and round-trippable.
std::string fmt_double(double v);

}  // namespace rlsim
