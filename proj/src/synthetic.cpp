#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "stlink/random.hpp"
#include "stlink/sampling.hpp"

namespace stlink {

namespace {

constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;

// The box is half-open, so the high edges clamp to the last value inside.
LatLon clamp_to(const LatLonRect& box, LatLon p) {
    return {std::clamp(p.lat, box.lat_lo, std::nextafter(box.lat_hi, box.lat_lo)),
            std::clamp(p.lon, box.lon_lo, std::nextafter(box.lon_hi, box.lon_lo))};
}

LatLon random_point(Rng& rng, const LatLonRect& box) {
    return {rng.uniform(box.lat_lo, box.lat_hi), rng.uniform(box.lon_lo, box.lon_hi)};
}

// Displacement of `km` along `bearing` (radians from north), flat-earth approximation.
LatLon offset(const LatLon& p, double km, double bearing) {
    const double dlat = km * std::cos(bearing) / kKmPerDegree;
    const double dlon = km * std::sin(bearing) /
                        (kKmPerDegree * std::max(1e-6, std::cos(p.lat * std::numbers::pi / 180.0)));
    return {p.lat + dlat, p.lon + dlon};
}

LatLon lerp(const LatLon& a, const LatLon& b, double f) {
    return {a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f};
}

// Pulls `to` back toward `from` until the move fits the budget.
LatLon limit_move(const LatLon& from, LatLon to, double budget_km) {
    for (int k = 0; k < 64 && haversine_km(from, to) > budget_km; ++k) {
        to = lerp(from, to, 0.5);
    }
    return haversine_km(from, to) > budget_km ? from : to;
}

}  // namespace

std::vector<Record> gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_entities < 1) {
        throw std::invalid_argument("gen_synthetic needs at least one entity");
    }
    if (!(cfg.step_minutes > 0.0) || !(cfg.alpha > 0.0)) {
        throw std::invalid_argument("step_minutes and alpha must be > 0");
    }
    Rng rng(cfg.seed);
    const auto step_s = static_cast<std::int64_t>(std::llround(cfg.step_minutes * 60.0));
    std::vector<Record> out;
    out.reserve(cfg.n_entities * cfg.steps);

    for (std::size_t e = 0; e < cfg.n_entities; ++e) {
        char id[32];
        std::snprintf(id, sizeof id, "e%06zu", e);

        std::vector<LatLon> spots;
        const int n_spots = cfg.model == MobilityModel::Hotspot ? std::max(1, cfg.hotspots) : 0;
        for (int k = 0; k < n_spots; ++k) spots.push_back(random_point(rng, cfg.bbox));

        LatLon pos = spots.empty() ? random_point(rng, cfg.bbox) : spots.front();
        bool at_spot = !spots.empty();
        std::int64_t prev_t = 0;
        for (std::size_t s = 0; s < cfg.steps; ++s) {
            std::int64_t t = cfg.start_time + static_cast<std::int64_t>(s) * step_s;
            if (cfg.time_jitter) {
                t += static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(step_s / 2 + 1)));
            }
            if (s > 0) {
                const double budget = cfg.alpha * static_cast<double>(t - prev_t) / 60.0;
                LatLon next = pos;
                bool next_at_spot = false;
                if (at_spot && rng.bernoulli(cfg.dwell_prob)) {
                    next_at_spot = true;
                } else if (!spots.empty() && rng.bernoulli(cfg.revisit_prob)) {
                    // Home is picked half of the time, the other hotspots share the rest.
                    std::size_t k = 0;
                    if (spots.size() > 1 && !rng.bernoulli(0.5)) {
                        k = 1 + rng.below(spots.size() - 1);
                    }
                    const LatLon target = spots[k];
                    const double dist = haversine_km(pos, target);
                    if (dist <= budget) {
                        next = target;
                        next_at_spot = true;
                    } else {
                        next = limit_move(pos, lerp(pos, target, budget / dist), budget);
                    }
                } else {
                    const double km = rng.uniform(0.0, std::min(cfg.roam_km, budget));
                    const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
                    next = limit_move(pos, clamp_to(cfg.bbox, offset(pos, km, bearing)), budget);
                }
                pos = next;
                at_spot = next_at_spot;
            }
            out.push_back({id, pos, t});
            prev_t = t;
        }
    }
    return out;
}

}  // namespace stlink
