#pragma once

///
/// \file common.hpp
///
/// Shared plumbing: error types, deterministic seeding, circular-phase
/// helpers and a minimal worker pool.
///

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cvrnn {

inline constexpr const char* kVersion = "0.1.0";

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi_v<double>;

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

/// Iterative solver ran out of its iteration budget. Carries the best
/// residual reached so callers can report how close the run came.
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, double best_residual)
        : std::runtime_error(what), best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

/// State became non-finite during propagation. Carries the step at which
/// the first non-finite value appeared.
class overflow_error : public std::runtime_error {
public:
    overflow_error(const std::string& what, long step)
        : std::runtime_error(what), step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Malformed input file (PGM, IDX, config, grid). `offset` is a byte offset
/// for binary formats and a 1-based line number for line-oriented ones.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Shape placement could not satisfy its constraints within the retry budget.
class placement_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer. Stable across platforms; used for all seed
/// derivation so that parallel per-image work is order-independent.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Derives an independent stream from a master seed. Documented scheme:
/// mix(master, stream) = splitmix64(master XOR splitmix64(stream + 1)).
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return splitmix64(master ^ splitmix64(stream + 1));
}

/// Deterministic RNG: mt19937_64 for the bit stream (bit-exact by the
/// standard) with fixed double mappings, so identical seeds give identical
/// draws on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform index in [0, n). Lemire reduction, no modulo bias worth
    /// caring about at our n.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(bits()) * n) >> 64);
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Circular helpers
// ---------------------------------------------------------------------------

/// Wraps any angle to the principal interval (−π, π].
inline double principal_phase(double theta) noexcept {
    double p = std::remainder(theta, 2.0 * kPi);
    if (p <= -kPi) p += 2.0 * kPi;
    return p;
}

/// Circular distance in [0, π].
inline double circular_distance(double a, double b) noexcept {
    return std::abs(principal_phase(a - b));
}

struct CircularStats {
    double mean = 0.0;       // circular mean angle
    double resultant = 0.0;  // mean resultant length in [0, 1]
};

template <typename Range>
CircularStats circular_stats(const Range& angles) {
    double s = 0.0, c = 0.0;
    std::size_t n = 0;
    for (double a : angles) {
        s += std::sin(a);
        c += std::cos(a);
        ++n;
    }
    CircularStats out;
    if (n == 0) return out;
    out.mean = std::atan2(s, c);
    out.resultant = std::sqrt(s * s + c * c) / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Runs fn(0..n-1) on up to `jobs` threads (0 = hardware concurrency).
/// Tasks must be independent; the first exception is rethrown after join.
inline void parallel_for(std::size_t n, unsigned jobs,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    unsigned workers = jobs == 0 ? (hw == 0 ? 1 : hw) : jobs;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load(std::memory_order_relaxed)) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace cvrnn
