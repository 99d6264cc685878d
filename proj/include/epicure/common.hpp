#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace epicure {

/// Error raised by every pipeline stage. `code` is a stable machine-readable
/// identifier (it is what the HTTP service puts in its error payload).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message,
          std::vector<std::string> suggestions = {})
        : std::runtime_error(message), code_(std::move(code)),
          suggestions_(std::move(suggestions)) {}

    const std::string& code() const noexcept { return code_; }
    const std::vector<std::string>& suggestions() const noexcept { return suggestions_; }

private:
    std::string code_;
    std::vector<std::string> suggestions_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

// Logging goes through spdlog; tests lower the level to silence warnings.
void log_warn(const std::string& message);
void log_info(const std::string& message);
void set_log_quiet(bool quiet);
/// Routes log output to stderr so stdout carries only command payloads.
void log_to_stderr();

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-seed from a base seed and any number of keys.
template <typename... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t base, Keys... keys) noexcept {
    std::uint64_t h = mix64(base);
    ((h = mix64(h ^ static_cast<std::uint64_t>(keys))), ...);
    return h;
}

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    return rng() % n;
}

/// Standard normal via Box-Muller on uniform01 (portable across libstdc++/libc++).
double standard_normal(Rng& rng);

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

/// Lowercase, trim, collapse runs of whitespace/hyphens/underscores into one underscore.
std::string normalize_name(std::string_view raw);

/// Ordered Levenshtein-closest candidates, used for "did you mean" suggestions.
std::vector<std::string> closest_names(const std::vector<std::string>& pool,
                                       std::string_view query, std::size_t limit = 5);

/// Linear-interpolated percentile (numpy's default), q in [0, 100].
double percentile(std::vector<double> values, double q);

}  // namespace epicure
