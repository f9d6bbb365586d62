#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "stlink/linkage.hpp"
#include "stlink/sampling.hpp"

namespace stlink {

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> hit_precision_at_k;
    std::size_t k = 40;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double runtime_ms = 0.0;
    std::uint64_t pair_comparisons = 0;
    std::uint64_t candidate_pairs = 0;
};

double f1_of(double precision, double recall);

/**
 * Scores `linked` against the truth. Precision is 1 for an empty linkage and
 * recall is 1 for an empty truth. Hit precision credits each truth entity with
 * max(0, (k - rank) / k), rank being the 0-based position of its true partner
 * among its scored candidates (descending score, ties by id); an unscored
 * partner earns 0. It is only computed when `all_scores` is given.
 */
Metrics evaluate(std::span<const WeightedEdge> linked, const Truth& truth,
                 std::optional<std::span<const WeightedEdge>> all_scores = std::nullopt, std::size_t k = 40);

Metrics evaluate(const LinkageResult& result, const Truth& truth,
                 std::optional<std::span<const WeightedEdge>> all_scores = std::nullopt, std::size_t k = 40);

}  // namespace stlink
