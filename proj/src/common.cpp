#include "epicure/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace epicure {

void log_warn(const std::string& message) { spdlog::warn("{}", message); }
void log_info(const std::string& message) { spdlog::info("{}", message); }

void set_log_quiet(bool quiet) {
    spdlog::set_level(quiet ? spdlog::level::err : spdlog::level::info);
}

void log_to_stderr() {
    auto logger = spdlog::stderr_color_mt("epicure");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
}

double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string normalize_name(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_sep = false;
    for (const char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || c == '-' || c == '_') {
            pending_sep = !out.empty();
            continue;
        }
        if (pending_sep) {
            out.push_back('_');
            pending_sep = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

namespace {

std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::vector<std::string> closest_names(const std::vector<std::string>& pool,
                                       std::string_view query, std::size_t limit) {
    const std::string q = normalize_name(query);
    std::vector<std::pair<std::size_t, const std::string*>> scored;
    scored.reserve(pool.size());
    for (const auto& name : pool) {
        std::size_t d = levenshtein(q, name);
        // prefix matches rank ahead of everything at equal distance
        if (!q.empty() && name.starts_with(q)) d = d / 2;
        scored.emplace_back(d, &name);
    }
    const std::size_t n = std::min(limit, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                      [](const auto& x, const auto& y) {
                          return x.first != y.first ? x.first < y.first : *x.second < *y.second;
                      });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(*scored[i].second);
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail("precondition", "percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

}  // namespace epicure
