#include "stlink/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stlink/errors.hpp"
#include "stlink/random.hpp"

namespace stlink {

TuningCurve tuning_curve(const std::map<std::string, MobilityHistory>& histories,
                         const TuningOptions& opts) {
    if (histories.empty()) {
        throw std::invalid_argument("tuning needs a non-empty dataset");
    }
    if (opts.sample_size < 2) {
        throw std::invalid_argument("tuning sample_size must be >= 2");
    }
    if (opts.levels.empty()) {
        throw std::invalid_argument("tuning needs candidate levels");
    }
    opts.similarity.validate();
    std::vector<int> levels = opts.levels;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    std::vector<const MobilityHistory*> base;
    for (const auto& [id, h] : histories) {
        if (h.level() < levels.back()) {
            throw std::invalid_argument("histories are coarser than the finest tuning level");
        }
        base.push_back(&h);
    }
    const std::size_t n = base.size();

    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    Rng rng(opts.seed);
    rng.shuffle(std::span(order));
    const std::size_t pivots = std::min(opts.sample_size, n);
    order.resize(pivots);
    std::sort(order.begin(), order.end());

    const double runaway = runaway_km(opts.similarity);
    TuningCurve curve;
    bool any_pair = false;
    for (const int level : levels) {
        std::vector<MobilityHistory> coarse;
        coarse.reserve(n);
        for (const MobilityHistory* h : base) {
            coarse.push_back(h->level() == level ? *h : h->coarsened(level));
        }
        std::vector<const MobilityHistory*> ptrs;
        for (const auto& h : coarse) ptrs.push_back(&h);
        const DatasetStats stats = DatasetStats::from(ptrs);
        std::vector<ScoringView> views;
        views.reserve(n);
        for (const auto& h : coarse) views.emplace_back(h, stats, opts.similarity.b);

        double sum = 0.0;
        std::size_t count = 0;
        for (const std::size_t p : order) {
            const double self = score_views(views[p], views[p], runaway).score;
            if (!(self > 0.0)) {
                continue;
            }
            for (std::size_t q = 0; q < n; ++q) {
                if (q == p) continue;
                sum += score_views(views[p], views[q], runaway).score / self;
                ++count;
            }
        }
        any_pair = any_pair || count > 0;
        curve.levels.push_back(level);
        curve.ratios.push_back(count > 0 ? sum / static_cast<double>(count) : 0.0);
        curve.pairs.push_back(count);
    }
    if (!any_pair) {
        throw DegenerateInputError("all pivot self-similarities are zero");
    }
    // Levels without a usable pair carry no information; drop them.
    TuningCurve out;
    for (std::size_t k = 0; k < curve.levels.size(); ++k) {
        if (curve.pairs[k] > 0) {
            out.levels.push_back(curve.levels[k]);
            out.ratios.push_back(curve.ratios[k]);
            out.pairs.push_back(curve.pairs[k]);
        }
    }
    return out;
}

int elbow(const TuningCurve& curve) {
    const std::size_t n = curve.levels.size();
    if (n != curve.ratios.size()) {
        throw std::invalid_argument("tuning curve levels and ratios differ in length");
    }
    if (n < 3) {
        throw std::invalid_argument("elbow needs at least 3 points");
    }
    const auto [xmin, xmax] = std::minmax_element(curve.levels.begin(), curve.levels.end());
    const auto [ymin, ymax] = std::minmax_element(curve.ratios.begin(), curve.ratios.end());
    const double xr = *xmax - *xmin;
    const double yr = *ymax - *ymin;
    auto nx = [&](std::size_t k) { return xr > 0 ? (curve.levels[k] - *xmin) / xr : 0.0; };
    auto ny = [&](std::size_t k) { return yr > 0 ? (curve.ratios[k] - *ymin) / yr : 0.0; };

    const double x0 = nx(0), y0 = ny(0);
    const double dx = nx(n - 1) - x0, dy = ny(n - 1) - y0;
    const double chord = std::hypot(dx, dy);
    constexpr double kTie = 1e-12;

    std::size_t best = 1;
    double best_dist = -1.0;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double cross = dx * (ny(k) - y0) - dy * (nx(k) - x0);
        const double dist = chord > 0 ? std::abs(cross) / chord : 0.0;
        const bool better = dist > best_dist + kTie;
        const bool tie_smaller = std::abs(dist - best_dist) <= kTie &&
                                 curve.levels[k] < curve.levels[best];
        if (better || tie_smaller) {
            best = k;
            best_dist = dist;
        }
    }
    return curve.levels[best];
}

TuningResult tune_spatial_level(const std::map<std::string, MobilityHistory>& histories_e,
                                const std::map<std::string, MobilityHistory>& histories_i,
                                const TuningOptions& opts) {
    TuningResult out;
    out.curve_e = tuning_curve(histories_e, opts);
    out.curve_i = tuning_curve(histories_i, opts);
    out.elbow_e = elbow(out.curve_e);
    out.elbow_i = elbow(out.curve_i);
    out.level = std::max(out.elbow_e, out.elbow_i);
    return out;
}

}  // namespace stlink
