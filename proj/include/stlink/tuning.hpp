#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stlink/history.hpp"
#include "stlink/similarity.hpp"

namespace stlink {

/// Mean ratio of cross-pair similarity to pivot self-similarity, per level.
struct TuningCurve {
    std::vector<int> levels;
    std::vector<double> ratios;
    std::vector<std::size_t> pairs;  // pairs averaged at each level
};

struct TuningOptions {
    std::vector<int> levels{6, 8, 10, 12, 14, 16, 18, 20};
    std::size_t sample_size = 50;  // pivots; clamped to the entity count
    std::uint64_t seed = 1;
    SimilarityParams similarity;
};

/**
 * Samples `sample_size` pivot entities and crosses each with every other
 * entity of the same dataset. Histories must be built at a level no coarser
 * than the finest candidate; each level is evaluated on coarsened copies with
 * the dataset's own statistics on both sides. Pairs whose pivot has a
 * non-positive self-similarity are skipped.
 */
TuningCurve tuning_curve(const std::map<std::string, MobilityHistory>& histories,
                         const TuningOptions& opts);

/// Level at the maximum distance to the chord of the normalized curve.
int elbow(const TuningCurve& curve);

struct TuningResult {
    int level = 0;
    TuningCurve curve_e;
    TuningCurve curve_i;
    int elbow_e = 0;
    int elbow_i = 0;
};

/// Elbow of each dataset independently; the finer of the two wins.
TuningResult tune_spatial_level(const std::map<std::string, MobilityHistory>& histories_e,
                                const std::map<std::string, MobilityHistory>& histories_i,
                                const TuningOptions& opts);

}  // namespace stlink
