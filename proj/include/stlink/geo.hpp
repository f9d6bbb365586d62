#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace stlink {

/// A point on the lat/lon plane, in degrees.
struct LatLon {
    double lat = 0.0;
    double lon = 0.0;

    /// Finite, lat in [-90, 90] and lon in [-180, 180].
    bool valid() const;

    friend bool operator==(const LatLon&, const LatLon&) = default;
};

/// Closed lat/lon rectangle in degrees.
struct LatLonRect {
    double lat_lo = -90.0;
    double lat_hi = 90.0;
    double lon_lo = -180.0;
    double lon_hi = 180.0;

    /// Half-open containment, with the high edge closed at the domain boundary.
    bool contains(const LatLon& p) const;
    LatLon center() const { return {(lat_lo + lat_hi) / 2, (lon_lo + lon_hi) / 2}; }
};

/**
 * Node of a quadtree over the equirectangular domain [-90, 90] x [-180, 180].
 *
 * Each level splits a cell at its lat and lon midpoints. The quadrant index of
 * a child is (lat_upper << 1) | lon_upper. The path of quadrant choices is
 * packed into a single 64-bit id followed by a sentinel bit, so ancestors are
 * obtained by masking and ids order parents before their descendants.
 */
class CellId {
public:
    static constexpr int kMaxLevel = 30;

    /// The level-0 cell covering the whole domain.
    constexpr CellId() : id_(std::uint64_t{1} << 60) {}

    static CellId root() { return CellId(); }

    /// Builds a cell from `level` 2-bit quadrant choices, most significant first.
    static CellId from_path(int level, std::uint64_t path);

    /// Rebuilds a cell from its packed id; throws on malformed ids.
    static CellId from_id(std::uint64_t id);

    int level() const;
    std::uint64_t path() const;
    std::uint64_t id() const { return id_; }

    CellId parent() const;
    CellId child(int quadrant) const;
    LatLonRect bounds() const;
    LatLon center() const { return bounds().center(); }

    /// Hex string of the packed id.
    std::string token() const;

    friend auto operator<=>(const CellId&, const CellId&) = default;

private:
    explicit constexpr CellId(std::uint64_t id) : id_(id) {}

    std::uint64_t id_;
};

/// Mean Earth radius in km (IUGG).
inline constexpr double kEarthRadiusKm = 6371.0088;

CellId cell_at(const LatLon& p, int level);
CellId parent(const CellId& c, int level);
double haversine_km(const LatLon& a, const LatLon& b);

/// Minimum great-circle distance between the closed rectangles of two cells
/// of the same level. Zero when the rectangles touch or overlap.
double cell_distance_km(const CellId& a, const CellId& b);

/// Same as cell_distance_km over arbitrary closed rectangles.
double rect_distance_km(const LatLonRect& a, const LatLonRect& b);

}  // namespace stlink

template <>
struct std::hash<stlink::CellId> {
    std::size_t operator()(const stlink::CellId& c) const noexcept {
        return std::hash<std::uint64_t>{}(c.id());
    }
};
