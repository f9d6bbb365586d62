#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlink/geo.hpp"

namespace stlink {

using WindowIndex = std::int64_t;

/// One timestamped observation of an entity.
struct Record {
    std::string entity;
    LatLon loc;
    std::int64_t t = 0;  // epoch seconds

    bool valid() const { return !entity.empty() && t >= 0 && loc.valid(); }
    friend bool operator==(const Record& a, const Record& b) {
        return a.entity == b.entity && a.loc == b.loc && a.t == b.t;
    }
};

struct CellCount {
    CellId cell;
    std::uint32_t count = 0;

    friend bool operator==(const CellCount&, const CellCount&) = default;
};

/// Cell occurrence counts, sorted by cell id, no zero entries.
using CellCounts = std::vector<CellCount>;

/// A populated (temporal window, spatial cell) pair.
struct TimeLocationBin {
    WindowIndex window = 0;
    CellId cell;

    friend auto operator<=>(const TimeLocationBin&, const TimeLocationBin&) = default;
};

struct TimeLocationBinHash {
    std::size_t operator()(const TimeLocationBin& b) const noexcept {
        std::uint64_t h = b.cell.id() ^ (static_cast<std::uint64_t>(b.window) * 0x9e3779b97f4a7c15ULL);
        h ^= h >> 31;
        h *= 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 29;
        return static_cast<std::size_t>(h);
    }
};

struct HistoryConfig {
    std::int64_t window_width = 900;  // seconds
    int spatial_level = 12;
    /// Start of window 0. Unset means: earliest timestamp, floored to window_width.
    std::optional<std::int64_t> epoch_origin;

    void validate() const;
};

/// Leaf of a mobility history: the cells visited during one window.
struct WindowCells {
    WindowIndex window = 0;
    CellCounts cells;

    friend bool operator==(const WindowCells&, const WindowCells&) = default;
};

/// Merges `src` into `dst`, adding counts of equal cells. Both must be sorted by cell.
void accumulate(CellCounts& dst, const CellCounts& src);

/// Re-keys counts to an ancestor level, summing counts that collapse together.
CellCounts rekey(const CellCounts& counts, int level);

/**
 * Per-entity mobility history.
 *
 * Leaves are the populated temporal windows in ascending order. Over them sits
 * a sparse segment tree: a node for the leaf positions [begin, end) holds the
 * summed cell counts of its two children. Unpopulated windows are never
 * materialized, so the node count is 2n - 1 for n populated windows.
 */
class MobilityHistory {
public:
    MobilityHistory() = default;
    MobilityHistory(std::string entity, int level, std::vector<WindowCells> leaves);

    const std::string& entity() const { return entity_; }
    int level() const { return level_; }
    bool empty() const { return leaves_.empty(); }

    std::span<const WindowCells> leaves() const { return leaves_; }

    /// Number of populated time-location bins, |H_u|.
    std::size_t bin_count() const { return bin_count_; }

    /// Total number of records aggregated in the history.
    std::uint64_t record_count() const;

    std::vector<TimeLocationBin> bins() const;

    /// Leaf counts for window w; empty when w is unpopulated.
    const CellCounts& window_cells(WindowIndex w) const;

    /// Summed counts over windows [w_begin, w_end); throws if w_begin >= w_end.
    CellCounts range_counts(WindowIndex w_begin, WindowIndex w_end) const;

    CellCounts root_counts() const;

    /// Same history with cells replaced by their ancestors at `level`.
    MobilityHistory coarsened(int level) const;

    std::size_t node_count() const { return nodes_.size(); }
    /// Sum of map sizes over all tree nodes.
    std::size_t node_entries() const;

    friend bool operator==(const MobilityHistory& a, const MobilityHistory& b) {
        return a.entity_ == b.entity_ && a.level_ == b.level_ && a.leaves_ == b.leaves_;
    }

private:
    struct Node {
        std::size_t begin = 0;  // leaf positions [begin, end)
        std::size_t end = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        CellCounts counts;
    };

    std::int32_t build(std::size_t begin, std::size_t end);
    void query(std::int32_t node, std::size_t begin, std::size_t end, CellCounts& out) const;

    std::string entity_;
    int level_ = 0;
    std::vector<WindowCells> leaves_;
    std::vector<Node> nodes_;
    std::size_t bin_count_ = 0;
};

std::vector<TimeLocationBin> bins(const MobilityHistory& h);
const CellCounts& window_cells(const MobilityHistory& h, WindowIndex w);
CellCounts range_counts(const MobilityHistory& h, WindowIndex w_begin, WindowIndex w_end);

/// floor(t / width) * width, also for negative t.
std::int64_t floor_to_width(std::int64_t t, std::int64_t width);

/// Earliest timestamp of `records` floored to `width`; nullopt when empty.
std::optional<std::int64_t> epoch_origin_of(std::span<const Record> records, std::int64_t width);

WindowIndex window_of(std::int64_t t, std::int64_t origin, std::int64_t width);

struct HistoryBuild {
    std::map<std::string, MobilityHistory> histories;
    std::size_t rejected = 0;  // invalid records or timestamps before the origin
    std::int64_t epoch_origin = 0;
};

HistoryBuild build_histories(std::span<const Record> records, const HistoryConfig& cfg);

}  // namespace stlink
