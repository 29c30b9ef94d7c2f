#pragma once

/// @file oracle.hpp
/// Exhaustive minimizers of the selection objective for tiny instances.
/// Enumeration walks the row structure directly: every image independently
/// takes one of C+1 options (no class, or class c), so only feasible
/// matrices are ever visited.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "mspld/error.hpp"
#include "mspld/rng.hpp"
#include "mspld/selector.hpp"

namespace mspld {

namespace detail {

inline bool lexicographically_less(const std::vector<SelectionMatrix>& a, const std::vector<SelectionMatrix>& b) {
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j].v != b[j].v) return std::lexicographical_compare(a[j].v.begin(), a[j].v.end(), b[j].v.begin(), b[j].v.end());
    }
    return false;
}

/// Odometer over per-row options. options[r] == 0 means row r selects
/// nothing, options[r] == c + 1 means row r selects class c.
inline bool next_assignment(std::vector<int>& options, int radix) {
    for (std::size_t r = 0; r < options.size(); ++r) {
        if (++options[r] < radix) return true;
        options[r] = 0;
    }
    return false;
}

inline void fill_rows(std::span<const int> options, SelectionMatrix& V) {
    std::fill(V.v.begin(), V.v.end(), std::uint8_t{0});
    for (int i = 0; i < V.num_images; ++i)
        if (options[i] > 0) V.at(i, options[i] - 1) = 1;
}

/// Selecting an infinite-loss entry is never allowed.
inline bool admissible(int j, const LossTensor& L, std::span<const int> options) {
    for (int i = 0; i < L.num_images; ++i)
        if (options[i] > 0 && !std::isfinite(L.at(j, i, options[i] - 1))) return false;
    return true;
}

}  // namespace detail

constexpr int kOracleMaxImages = 8;
constexpr int kOracleMaxClasses = 3;

/// Exact minimizer of model j's block objective with the others fixed.
/// Ties resolve to the lexicographically smallest matrix (row-major bytes).
inline SelectionMatrix brute_force_best_v(int j, const LossTensor& L, std::span<const double> lambda,
                                          const GammaMatrix& gamma, std::span<const SelectionMatrix> others) {
    if (L.num_images > kOracleMaxImages || L.num_classes > kOracleMaxClasses)
        throw InvalidArgument("oracle instance too large (u <= 8, C <= 3)");
    if (lambda.size() != static_cast<std::size_t>(L.num_classes)) throw InvalidArgument("lambda needs one entry per class");

    std::vector<int> options(L.num_images, 0);
    SelectionMatrix candidate(j, L.num_images, L.num_classes);
    std::vector<SelectionMatrix> best{candidate};
    double best_value = block_objective(j, L, candidate, lambda, gamma, others);
    while (detail::next_assignment(options, L.num_classes + 1)) {
        if (!detail::admissible(j, L, options)) continue;
        detail::fill_rows(options, candidate);
        const double value = block_objective(j, L, candidate, lambda, gamma, others);
        if (value < best_value || (value == best_value && detail::lexicographically_less({candidate}, best))) {
            best_value = value;
            best = {candidate};
        }
    }
    return best.front();
}

/// Exact joint minimizer of the full objective over every model's matrix.
inline std::vector<SelectionMatrix> brute_force_joint(const LossTensor& L, const std::vector<std::vector<double>>& lambdas,
                                                      const GammaMatrix& gamma) {
    const int m = L.num_models;
    if (m > 2 || L.num_images > 4 || L.num_classes > 2)
        throw InvalidArgument("joint oracle instance too large (m <= 2, u <= 4, C <= 2)");
    if (lambdas.size() != static_cast<std::size_t>(m)) throw InvalidArgument("need one lambda vector per model");

    std::vector<int> options(static_cast<std::size_t>(m) * L.num_images, 0);
    std::vector<SelectionMatrix> candidate;
    for (int j = 0; j < m; ++j) candidate.emplace_back(j, L.num_images, L.num_classes);
    auto best = candidate;
    double best_value = objective(L, best, lambdas, gamma);
    while (detail::next_assignment(options, L.num_classes + 1)) {
        bool ok = true;
        for (int j = 0; j < m && ok; ++j)
            ok = detail::admissible(j, L, std::span<const int>(options).subspan(static_cast<std::size_t>(j) * L.num_images, L.num_images));
        if (!ok) continue;
        for (int j = 0; j < m; ++j)
            detail::fill_rows(std::span<const int>(options).subspan(static_cast<std::size_t>(j) * L.num_images, L.num_images),
                              candidate[j]);
        const double value = objective(L, candidate, lambdas, gamma);
        if (value < best_value || (value == best_value && detail::lexicographically_less(candidate, best))) {
            best_value = value;
            best = candidate;
        }
    }
    return best;
}

struct OracleCheckReport {
    int instances = 0;
    int exact = 0;
    std::vector<int> mismatches;  // indices of failing instances
};

/// Runs update_v against the oracle on `n` random single-model instances
/// (u <= 8, C <= 3, about a quarter of the losses infinite, random targets)
/// and counts bit-identical objective values.
inline OracleCheckReport oracle_check(int n, std::uint64_t seed) {
    if (n < 0) throw InvalidArgument("instance count must be non-negative");
    OracleCheckReport report;
    report.instances = n;
    for (int t = 0; t < n; ++t) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(t));
        std::uniform_int_distribution<int> images(1, kOracleMaxImages), classes(1, kOracleMaxClasses);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int u = images(rng), C = classes(rng);
        LossTensor L(1, u, C);
        for (auto& v : L.data) v = unit(rng) < 0.25 ? std::numeric_limits<double>::infinity() : unit(rng);
        PaceState pace = initial_pace(C, 0, 1);
        for (auto& r : pace.targets) r = std::uniform_int_distribution<int>(0, u)(rng);
        const auto up = update_v(0, L, pace, {});
        const auto best = brute_force_best_v(0, L, up.lambda, pace.gamma, {});
        if (block_objective(0, L, up.selection, up.lambda, pace.gamma, {}) ==
            block_objective(0, L, best, up.lambda, pace.gamma, {}))
            ++report.exact;
        else
            report.mismatches.push_back(t);
    }
    return report;
}

}  // namespace mspld
