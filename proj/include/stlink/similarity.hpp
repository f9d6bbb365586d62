#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stlink/history.hpp"

namespace stlink {

struct SimilarityParams {
    double alpha = 2.0;               // max speed, km per minute
    double b = 0.5;                   // length normalization exponent
    std::int64_t window_width = 900;  // seconds

    void validate() const;
};

/// Floor applied to the argument of log2 in the proximity, so the alibi
/// penalty bottoms out at -20 per bin pair instead of diverging at d = 2R.
inline constexpr double kProximityFloor = 1.0 / (1 << 20);

/// Per-dataset statistics used by the idf weight and the length normalization.
struct DatasetStats {
    std::size_t n_entities = 0;
    double avg_bins = 0.0;
    std::unordered_map<TimeLocationBin, std::uint32_t, TimeLocationBinHash> bin_entity_count;

    static DatasetStats from(std::span<const MobilityHistory* const> histories);
    static DatasetStats from(const std::map<std::string, MobilityHistory>& histories);
};

/// Maximum distance an entity can cover within one window.
double runaway_km(const SimilarityParams& params);

double proximity(const TimeLocationBin& e, const TimeLocationBin& i, double runaway);

/// Proximity of two cells of the same window at distance `d_km`.
double proximity_at(double d_km, double runaway);

double idf(const TimeLocationBin& e, const DatasetStats& stats);
double length_norm(const MobilityHistory& h, const DatasetStats& stats, double b);

using BinPair = std::pair<TimeLocationBin, TimeLocationBin>;

/// Greedy mutually-nearest pairing of the cells of one window: repeatedly take
/// the closest remaining cross pair. Ties go to the smaller unordered cell
/// pair (min, max), then to the smaller u cell.
std::vector<BinPair> mnn_pairs(const CellCounts& cells_u, const CellCounts& cells_v, WindowIndex w);

/// Same as mnn_pairs with the furthest remaining pair taken first.
std::vector<BinPair> mfn_pairs(const CellCounts& cells_u, const CellCounts& cells_v, WindowIndex w);

/**
 * A history prepared for repeated scoring against one dataset: cell bounds,
 * per-bin idf and the length normalization are computed once.
 */
class ScoringView {
public:
    struct Bin {
        CellId cell;
        LatLonRect rect;
        double idf = 0.0;
    };
    struct Window {
        WindowIndex window = 0;
        std::uint32_t begin = 0;  // into bins()
        std::uint32_t end = 0;
    };

    ScoringView(const MobilityHistory& h, const DatasetStats& stats, double b);

    std::span<const Window> windows() const { return windows_; }
    std::span<const Bin> bins() const { return bins_; }
    double norm() const { return norm_; }

private:
    std::vector<Window> windows_;
    std::vector<Bin> bins_;
    double norm_ = 1.0;
};

struct PairScore {
    double score = 0.0;
    std::uint64_t comparisons = 0;  // bin pairs whose distance was evaluated
};

/// Similarity of two prepared histories over their common windows.
PairScore score_views(const ScoringView& u, const ScoringView& v, double runaway);

double score_pair(const MobilityHistory& hu, const MobilityHistory& hv, const DatasetStats& stats_e,
                  const DatasetStats& stats_i, const SimilarityParams& params);

}  // namespace stlink
