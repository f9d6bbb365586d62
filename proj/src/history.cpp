#include "stlink/history.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace stlink {

void HistoryConfig::validate() const {
    if (window_width < 1) {
        throw std::invalid_argument("window_width must be >= 1 second");
    }
    if (spatial_level < 0 || spatial_level > CellId::kMaxLevel) {
        throw std::invalid_argument("spatial_level must be in [0, 30]");
    }
}

void accumulate(CellCounts& dst, const CellCounts& src) {
    if (src.empty()) {
        return;
    }
    if (dst.empty()) {
        dst = src;
        return;
    }
    CellCounts merged;
    merged.reserve(dst.size() + src.size());
    auto a = dst.begin();
    auto b = src.begin();
    while (a != dst.end() && b != src.end()) {
        if (a->cell < b->cell) {
            merged.push_back(*a++);
        } else if (b->cell < a->cell) {
            merged.push_back(*b++);
        } else {
            merged.push_back({a->cell, a->count + b->count});
            ++a;
            ++b;
        }
    }
    merged.insert(merged.end(), a, dst.end());
    merged.insert(merged.end(), b, src.end());
    dst = std::move(merged);
}

CellCounts rekey(const CellCounts& counts, int level) {
    CellCounts out;
    out.reserve(counts.size());
    for (const auto& [cell, n] : counts) {
        const CellId up = parent(cell, level);
        // Ancestors of sorted cells stay sorted, so duplicates are adjacent.
        if (!out.empty() && out.back().cell == up) {
            out.back().count += n;
        } else {
            out.push_back({up, n});
        }
    }
    return out;
}

MobilityHistory::MobilityHistory(std::string entity, int level, std::vector<WindowCells> leaves)
    : entity_(std::move(entity)), level_(level), leaves_(std::move(leaves)) {
    std::erase_if(leaves_, [](const WindowCells& w) { return w.cells.empty(); });
    std::sort(leaves_.begin(), leaves_.end(),
              [](const WindowCells& a, const WindowCells& b) { return a.window < b.window; });
    for (std::size_t i = 1; i < leaves_.size(); ++i) {
        if (leaves_[i].window == leaves_[i - 1].window) {
            throw std::invalid_argument("duplicate window in mobility history");
        }
    }
    for (const auto& leaf : leaves_) {
        bin_count_ += leaf.cells.size();
    }
    if (!leaves_.empty()) {
        nodes_.reserve(2 * leaves_.size() - 1);
        build(0, leaves_.size());
    }
}

std::int32_t MobilityHistory::build(std::size_t begin, std::size_t end) {
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1, {}});
    if (end - begin == 1) {
        nodes_[idx].counts = leaves_[begin].cells;
        return idx;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    CellCounts counts = nodes_[left].counts;
    accumulate(counts, nodes_[right].counts);
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    nodes_[idx].counts = std::move(counts);
    return idx;
}

void MobilityHistory::query(std::int32_t node, std::size_t begin, std::size_t end,
                            CellCounts& out) const {
    const Node& n = nodes_[node];
    if (end <= n.begin || n.end <= begin) {
        return;
    }
    if (begin <= n.begin && n.end <= end) {
        accumulate(out, n.counts);
        return;
    }
    query(n.left, begin, end, out);
    query(n.right, begin, end, out);
}

std::uint64_t MobilityHistory::record_count() const {
    std::uint64_t total = 0;
    for (const auto& leaf : leaves_) {
        for (const auto& c : leaf.cells) {
            total += c.count;
        }
    }
    return total;
}

std::vector<TimeLocationBin> MobilityHistory::bins() const {
    std::vector<TimeLocationBin> out;
    out.reserve(bin_count_);
    for (const auto& leaf : leaves_) {
        for (const auto& c : leaf.cells) {
            out.push_back({leaf.window, c.cell});
        }
    }
    return out;
}

const CellCounts& MobilityHistory::window_cells(WindowIndex w) const {
    static const CellCounts kEmpty;
    auto it = std::lower_bound(leaves_.begin(), leaves_.end(), w,
                               [](const WindowCells& l, WindowIndex v) { return l.window < v; });
    if (it == leaves_.end() || it->window != w) {
        return kEmpty;
    }
    return it->cells;
}

CellCounts MobilityHistory::range_counts(WindowIndex w_begin, WindowIndex w_end) const {
    if (w_begin >= w_end) {
        throw std::invalid_argument("range_counts requires w_begin < w_end");
    }
    auto by_window = [](const WindowCells& l, WindowIndex v) { return l.window < v; };
    const auto lo = std::lower_bound(leaves_.begin(), leaves_.end(), w_begin, by_window);
    const auto hi = std::lower_bound(lo, leaves_.end(), w_end, by_window);
    CellCounts out;
    if (lo != hi) {
        query(0, static_cast<std::size_t>(lo - leaves_.begin()),
              static_cast<std::size_t>(hi - leaves_.begin()), out);
    }
    return out;
}

CellCounts MobilityHistory::root_counts() const {
    return nodes_.empty() ? CellCounts{} : nodes_.front().counts;
}

MobilityHistory MobilityHistory::coarsened(int level) const {
    if (level > level_) {
        throw std::invalid_argument("coarsened level must not exceed the history level");
    }
    std::vector<WindowCells> leaves;
    leaves.reserve(leaves_.size());
    for (const auto& leaf : leaves_) {
        leaves.push_back({leaf.window, rekey(leaf.cells, level)});
    }
    return MobilityHistory(entity_, level, std::move(leaves));
}

std::size_t MobilityHistory::node_entries() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) {
        total += n.counts.size();
    }
    return total;
}

std::vector<TimeLocationBin> bins(const MobilityHistory& h) { return h.bins(); }

const CellCounts& window_cells(const MobilityHistory& h, WindowIndex w) {
    return h.window_cells(w);
}

CellCounts range_counts(const MobilityHistory& h, WindowIndex w_begin, WindowIndex w_end) {
    return h.range_counts(w_begin, w_end);
}

std::int64_t floor_to_width(std::int64_t t, std::int64_t width) {
    std::int64_t q = t / width;
    if (t % width != 0 && t < 0) {
        --q;
    }
    return q * width;
}

std::optional<std::int64_t> epoch_origin_of(std::span<const Record> records, std::int64_t width) {
    std::optional<std::int64_t> lo;
    for (const auto& r : records) {
        if (r.valid() && (!lo || r.t < *lo)) {
            lo = r.t;
        }
    }
    if (lo) {
        lo = floor_to_width(*lo, width);
    }
    return lo;
}

WindowIndex window_of(std::int64_t t, std::int64_t origin, std::int64_t width) {
    return floor_to_width(t - origin, width) / width;
}

HistoryBuild build_histories(std::span<const Record> records, const HistoryConfig& cfg) {
    cfg.validate();
    HistoryBuild out;
    out.epoch_origin = cfg.epoch_origin.value_or(
        epoch_origin_of(records, cfg.window_width).value_or(0));

    std::map<std::string, std::vector<TimeLocationBin>> per_entity;
    for (const auto& r : records) {
        if (!r.valid()) {
            ++out.rejected;
            continue;
        }
        const WindowIndex w = window_of(r.t, out.epoch_origin, cfg.window_width);
        if (w < 0) {
            ++out.rejected;
            continue;
        }
        per_entity[r.entity].push_back({w, cell_at(r.loc, cfg.spatial_level)});
    }

    for (auto& [entity, raw] : per_entity) {
        std::sort(raw.begin(), raw.end());
        std::vector<WindowCells> leaves;
        for (const auto& bin : raw) {
            if (leaves.empty() || leaves.back().window != bin.window) {
                leaves.push_back({bin.window, {}});
            }
            auto& cells = leaves.back().cells;
            if (!cells.empty() && cells.back().cell == bin.cell) {
                ++cells.back().count;
            } else {
                cells.push_back({bin.cell, 1});
            }
        }
        out.histories.emplace(entity, MobilityHistory(entity, cfg.spatial_level, std::move(leaves)));
    }
    return out;
}

}  // namespace stlink
