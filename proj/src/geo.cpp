#include "stlink/geo.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace stlink {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Packed ids keep 2 bits per level below a sentinel bit at position 60 - 2*level.
constexpr int kPosBits = 2 * CellId::kMaxLevel;

double hav(double angle) {
    const double s = std::sin(angle / 2);
    return s * s;
}

// Haversine term for two points given in radians.
double hav_points(double lat1, double lon1, double lat2, double lon2) {
    return hav(lat1 - lat2) + std::cos(lat1) * std::cos(lat2) * hav(lon1 - lon2);
}

double hav_to_km(double h) {
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(std::max(0.0, h))));
}

// Gap in degrees between two closed intervals, zero when they intersect.
double interval_gap(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::max({0.0, b_lo - a_hi, a_lo - b_hi});
}

// Latitude in [lo, hi] maximizing k*cos(fixed)*cos(x) + sin(fixed)*sin(x),
// i.e. the point of the segment closest to a point at `fixed` latitude on a
// meridian separated by an angle with cosine k. Candidates are the unconstrained
// peak (when inside) and both endpoints.
std::array<double, 3> meridian_candidates(double fixed, double k, double lo, double hi) {
    const double peak = std::atan2(std::sin(fixed), k * std::cos(fixed));
    return {std::clamp(peak, lo, hi), lo, hi};
}

}  // namespace

bool LatLon::valid() const {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
           lon >= -180.0 && lon <= 180.0;
}

bool LatLonRect::contains(const LatLon& p) const {
    const bool lat_in = p.lat >= lat_lo && (p.lat < lat_hi || (lat_hi == 90.0 && p.lat == 90.0));
    const bool lon_in =
        p.lon >= lon_lo && (p.lon < lon_hi || (lon_hi == 180.0 && p.lon == 180.0));
    return lat_in && lon_in;
}

CellId CellId::from_path(int level, std::uint64_t path) {
    if (level < 0 || level > kMaxLevel) {
        throw std::invalid_argument("cell level out of range: " + std::to_string(level));
    }
    if (level < 32 && (path >> (2 * level)) != 0) {
        throw std::invalid_argument("cell path has more than 2*level bits");
    }
    return CellId(((path << 1) | 1) << (kPosBits - 2 * level));
}

CellId CellId::from_id(std::uint64_t id) {
    if (id == 0 || (id >> (kPosBits + 1)) != 0) {
        throw std::invalid_argument("malformed cell id");
    }
    const int tz = std::countr_zero(id);
    if ((kPosBits - tz) % 2 != 0) {
        throw std::invalid_argument("malformed cell id");
    }
    return CellId(id);
}

int CellId::level() const { return (kPosBits - std::countr_zero(id_)) / 2; }

std::uint64_t CellId::path() const { return id_ >> (kPosBits - 2 * level() + 1); }

CellId CellId::parent() const {
    const int lvl = level();
    if (lvl == 0) {
        throw std::invalid_argument("root cell has no parent");
    }
    return from_path(lvl - 1, path() >> 2);
}

CellId CellId::child(int quadrant) const {
    const int lvl = level();
    if (lvl == kMaxLevel) {
        throw std::invalid_argument("leaf cell has no children");
    }
    if (quadrant < 0 || quadrant > 3) {
        throw std::invalid_argument("quadrant must be in [0, 3]");
    }
    return from_path(lvl + 1, (path() << 2) | static_cast<std::uint64_t>(quadrant));
}

LatLonRect CellId::bounds() const {
    LatLonRect r;
    const int lvl = level();
    const std::uint64_t p = path();
    for (int i = lvl - 1; i >= 0; --i) {
        const auto q = (p >> (2 * i)) & 3u;
        const double lat_mid = (r.lat_lo + r.lat_hi) / 2;
        const double lon_mid = (r.lon_lo + r.lon_hi) / 2;
        if (q & 2u) {
            r.lat_lo = lat_mid;
        } else {
            r.lat_hi = lat_mid;
        }
        if (q & 1u) {
            r.lon_lo = lon_mid;
        } else {
            r.lon_hi = lon_mid;
        }
    }
    return r;
}

std::string CellId::token() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_));
    return buf;
}

CellId cell_at(const LatLon& p, int level) {
    if (level < 0 || level > CellId::kMaxLevel) {
        throw std::invalid_argument("cell level out of range: " + std::to_string(level));
    }
    if (!p.valid()) {
        throw std::invalid_argument("invalid coordinates");
    }
    LatLonRect r;
    std::uint64_t path = 0;
    for (int i = 0; i < level; ++i) {
        const double lat_mid = (r.lat_lo + r.lat_hi) / 2;
        const double lon_mid = (r.lon_lo + r.lon_hi) / 2;
        std::uint64_t q = 0;
        if (p.lat >= lat_mid) {
            q |= 2u;
            r.lat_lo = lat_mid;
        } else {
            r.lat_hi = lat_mid;
        }
        if (p.lon >= lon_mid) {
            q |= 1u;
            r.lon_lo = lon_mid;
        } else {
            r.lon_hi = lon_mid;
        }
        path = (path << 2) | q;
    }
    return CellId::from_path(level, path);
}

CellId parent(const CellId& c, int level) {
    const int lvl = c.level();
    if (level < 0 || level > lvl) {
        throw std::invalid_argument("parent level must be in [0, cell level]");
    }
    return CellId::from_path(level, c.path() >> (2 * (lvl - level)));
}

double haversine_km(const LatLon& a, const LatLon& b) {
    if (!a.valid() || !b.valid()) {
        throw std::invalid_argument("invalid coordinates");
    }
    return hav_to_km(hav_points(a.lat * kDegToRad, a.lon * kDegToRad, b.lat * kDegToRad,
                                b.lon * kDegToRad));
}

double rect_distance_km(const LatLonRect& a, const LatLonRect& b) {
    // Longitude gap over the direct and +-360 shifted placements of b.
    double lon_gap = 360.0;
    for (const double shift : {-360.0, 0.0, 360.0}) {
        lon_gap = std::min(lon_gap, interval_gap(a.lon_lo, a.lon_hi, b.lon_lo + shift,
                                                 b.lon_hi + shift));
    }
    const double lat_gap = interval_gap(a.lat_lo, a.lat_hi, b.lat_lo, b.lat_hi);
    if (lon_gap == 0.0) {
        // A shared meridian exists; the latitude difference is the exact minimum.
        return kEarthRadiusKm * lat_gap * kDegToRad;
    }

    // Distance grows with the longitude difference, so the closest points lie on
    // the facing meridian edges. On those two segments the minimum sits on the
    // boundary of the (lat_a, lat_b) box: fix one latitude at an endpoint and
    // take the closest point of the other segment.
    const double dlon = std::min(lon_gap, 180.0) * kDegToRad;
    const double k = std::cos(dlon);
    const double a_lo = a.lat_lo * kDegToRad;
    const double a_hi = a.lat_hi * kDegToRad;
    const double b_lo = b.lat_lo * kDegToRad;
    const double b_hi = b.lat_hi * kDegToRad;

    double best = 1.0;
    for (const double fa : {a_lo, a_hi}) {
        for (const double fb : meridian_candidates(fa, k, b_lo, b_hi)) {
            best = std::min(best, hav_points(fa, 0.0, fb, dlon));
        }
    }
    for (const double fb : {b_lo, b_hi}) {
        for (const double fa : meridian_candidates(fb, k, a_lo, a_hi)) {
            best = std::min(best, hav_points(fa, 0.0, fb, dlon));
        }
    }
    return hav_to_km(best);
}

double cell_distance_km(const CellId& a, const CellId& b) {
    if (a.level() != b.level()) {
        throw std::invalid_argument("cell_distance_km requires cells of the same level");
    }
    if (a == b) {
        return 0.0;
    }
    return rect_distance_km(a.bounds(), b.bounds());
}

}  // namespace stlink
