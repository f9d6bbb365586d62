#include "stlink/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stlink {

namespace {

struct Candidate {
    double d;
    std::uint32_t iu;
    std::uint32_t iv;
};

double bin_distance(const CellId& a, const LatLonRect& ra, const CellId& b, const LatLonRect& rb) {
    return a == b ? 0.0 : rect_distance_km(ra, rb);
}

// Greedy pairing over a dense distance matrix (row-major, nu x nv). Cell ids
// are only used to break distance ties. Returns (row, col) index pairs.
template <bool Furthest>
std::vector<std::pair<std::uint32_t, std::uint32_t>> greedy_pairs(std::span<const double> dist,
                                                                  std::span<const CellId> cu,
                                                                  std::span<const CellId> cv) {
    const auto nu = static_cast<std::uint32_t>(cu.size());
    const auto nv = static_cast<std::uint32_t>(cv.size());
    std::vector<Candidate> cands;
    cands.reserve(static_cast<std::size_t>(nu) * nv);
    for (std::uint32_t i = 0; i < nu; ++i) {
        for (std::uint32_t j = 0; j < nv; ++j) {
            cands.push_back({dist[static_cast<std::size_t>(i) * nv + j], i, j});
        }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.d != b.d) {
            return Furthest ? a.d > b.d : a.d < b.d;
        }
        // Unordered cell pair first, so swapping the two sides keeps the order.
        const auto ka = std::minmax(cu[a.iu], cv[a.iv]);
        const auto kb = std::minmax(cu[b.iu], cv[b.iv]);
        if (ka != kb) {
            return ka < kb;
        }
        return cu[a.iu] < cu[b.iu];
    });
    std::vector<bool> used_u(nu, false);
    std::vector<bool> used_v(nv, false);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    const std::uint32_t want = std::min(nu, nv);
    for (const auto& c : cands) {
        if (out.size() == want) {
            break;
        }
        if (used_u[c.iu] || used_v[c.iv]) {
            continue;
        }
        used_u[c.iu] = true;
        used_v[c.iv] = true;
        out.emplace_back(c.iu, c.iv);
    }
    return out;
}

template <bool Furthest>
std::vector<BinPair> pair_cells(const CellCounts& cells_u, const CellCounts& cells_v, WindowIndex w) {
    std::vector<CellId> cu;
    std::vector<CellId> cv;
    for (const auto& c : cells_u) cu.push_back(c.cell);
    for (const auto& c : cells_v) cv.push_back(c.cell);
    std::vector<double> dist;
    dist.reserve(cu.size() * cv.size());
    for (const auto& a : cu) {
        for (const auto& b : cv) {
            dist.push_back(cell_distance_km(a, b));
        }
    }
    std::vector<BinPair> out;
    for (const auto& [i, j] : greedy_pairs<Furthest>(dist, cu, cv)) {
        out.push_back({{w, cu[i]}, {w, cv[j]}});
    }
    return out;
}

}  // namespace

void SimilarityParams::validate() const {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("alpha must be > 0");
    }
    if (!(b >= 0.0 && b <= 1.0)) {
        throw std::invalid_argument("b must be in [0, 1]");
    }
    if (window_width < 1) {
        throw std::invalid_argument("window_width must be >= 1 second");
    }
}

DatasetStats DatasetStats::from(std::span<const MobilityHistory* const> histories) {
    DatasetStats s;
    s.n_entities = histories.size();
    std::size_t total = 0;
    for (const MobilityHistory* h : histories) {
        total += h->bin_count();
        for (const auto& leaf : h->leaves()) {
            for (const auto& c : leaf.cells) {
                ++s.bin_entity_count[{leaf.window, c.cell}];
            }
        }
    }
    s.avg_bins = s.n_entities == 0 ? 0.0 : static_cast<double>(total) / s.n_entities;
    return s;
}

DatasetStats DatasetStats::from(const std::map<std::string, MobilityHistory>& histories) {
    std::vector<const MobilityHistory*> ptrs;
    ptrs.reserve(histories.size());
    for (const auto& [id, h] : histories) {
        ptrs.push_back(&h);
    }
    return from(ptrs);
}

double runaway_km(const SimilarityParams& params) {
    return static_cast<double>(params.window_width) / 60.0 * params.alpha;
}

double proximity_at(double d_km, double runaway) {
    const double arg = 2.0 - std::min(d_km / runaway, 2.0);
    return std::log2(std::max(arg, kProximityFloor));
}

double proximity(const TimeLocationBin& e, const TimeLocationBin& i, double runaway) {
    if (!(runaway > 0.0)) {
        throw std::invalid_argument("runaway distance must be > 0");
    }
    if (e.window != i.window) {
        return 0.0;
    }
    return proximity_at(cell_distance_km(e.cell, i.cell), runaway);
}

double idf(const TimeLocationBin& e, const DatasetStats& stats) {
    const auto it = stats.bin_entity_count.find(e);
    if (it == stats.bin_entity_count.end()) {
        throw std::invalid_argument("idf: bin not present in dataset");
    }
    return std::log(static_cast<double>(stats.n_entities) / it->second);
}

double length_norm(const MobilityHistory& h, const DatasetStats& stats, double b) {
    if (!(stats.avg_bins > 0.0)) {
        throw std::invalid_argument("length_norm requires avg_bins > 0");
    }
    return (1.0 - b) + b * static_cast<double>(h.bin_count()) / stats.avg_bins;
}

std::vector<BinPair> mnn_pairs(const CellCounts& cells_u, const CellCounts& cells_v, WindowIndex w) {
    return pair_cells<false>(cells_u, cells_v, w);
}

std::vector<BinPair> mfn_pairs(const CellCounts& cells_u, const CellCounts& cells_v, WindowIndex w) {
    return pair_cells<true>(cells_u, cells_v, w);
}

ScoringView::ScoringView(const MobilityHistory& h, const DatasetStats& stats, double b) {
    if (!h.empty()) {
        norm_ = length_norm(h, stats, b);
    }
    windows_.reserve(h.leaves().size());
    bins_.reserve(h.bin_count());
    for (const auto& leaf : h.leaves()) {
        Window w{leaf.window, static_cast<std::uint32_t>(bins_.size()), 0};
        for (const auto& c : leaf.cells) {
            bins_.push_back({c.cell, c.cell.bounds(), idf({leaf.window, c.cell}, stats)});
        }
        w.end = static_cast<std::uint32_t>(bins_.size());
        windows_.push_back(w);
    }
}

PairScore score_views(const ScoringView& u, const ScoringView& v, double runaway) {
    PairScore out;
    const double scale = 1.0 / (u.norm() * v.norm());
    const auto bu = u.bins();
    const auto bv = v.bins();
    auto term = [&](const ScoringView::Bin& a, const ScoringView::Bin& b, double d) {
        return proximity_at(d, runaway) * std::min(a.idf, b.idf) * scale;
    };

    std::vector<double> dist;
    std::vector<CellId> cu;
    std::vector<CellId> cv;
    auto wu = u.windows().begin();
    auto wv = v.windows().begin();
    while (wu != u.windows().end() && wv != v.windows().end()) {
        if (wu->window < wv->window) {
            ++wu;
            continue;
        }
        if (wv->window < wu->window) {
            ++wv;
            continue;
        }
        const std::uint32_t nu = wu->end - wu->begin;
        const std::uint32_t nv = wv->end - wv->begin;
        out.comparisons += static_cast<std::uint64_t>(nu) * nv;
        if (nu == 1 && nv == 1) {
            // MNN and MFN coincide; the pair is counted once.
            const auto& a = bu[wu->begin];
            const auto& b = bv[wv->begin];
            out.score += term(a, b, bin_distance(a.cell, a.rect, b.cell, b.rect));
        } else {
            dist.clear();
            cu.clear();
            cv.clear();
            for (std::uint32_t i = wu->begin; i < wu->end; ++i) cu.push_back(bu[i].cell);
            for (std::uint32_t j = wv->begin; j < wv->end; ++j) cv.push_back(bv[j].cell);
            for (std::uint32_t i = wu->begin; i < wu->end; ++i) {
                for (std::uint32_t j = wv->begin; j < wv->end; ++j) {
                    dist.push_back(bin_distance(bu[i].cell, bu[i].rect, bv[j].cell, bv[j].rect));
                }
            }
            const auto nearest = greedy_pairs<false>(dist, cu, cv);
            for (const auto& [i, j] : nearest) {
                out.score += term(bu[wu->begin + i], bv[wv->begin + j], dist[i * nv + j]);
            }
            for (const auto& [i, j] : greedy_pairs<true>(dist, cu, cv)) {
                if (std::find(nearest.begin(), nearest.end(), std::pair{i, j}) != nearest.end()) {
                    continue;
                }
                const double t = term(bu[wu->begin + i], bv[wv->begin + j], dist[i * nv + j]);
                if (t < 0.0) {
                    out.score += t;
                }
            }
        }
        ++wu;
        ++wv;
    }
    return out;
}

double score_pair(const MobilityHistory& hu, const MobilityHistory& hv, const DatasetStats& stats_e,
                  const DatasetStats& stats_i, const SimilarityParams& params) {
    params.validate();
    const ScoringView u(hu, stats_e, params.b);
    const ScoringView v(hv, stats_i, params.b);
    return score_views(u, v, runaway_km(params)).score;
}

}  // namespace stlink
