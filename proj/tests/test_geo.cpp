#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>
#include <vector>

#include "stlink/geo.hpp"
#include "stlink/random.hpp"

using namespace stlink;

namespace {

LatLon random_point(Rng& rng) { return {rng.uniform(-90.0, 90.0), rng.uniform(-180.0, 180.0)}; }

CellId random_cell(Rng& rng, int level) { return cell_at(random_point(rng), level); }

// Points spaced along the four edges of a rectangle.
std::vector<LatLon> boundary(const LatLonRect& r, int per_edge) {
    std::vector<LatLon> pts;
    for (int k = 0; k <= per_edge; ++k) {
        const double f = static_cast<double>(k) / per_edge;
        const double lat = r.lat_lo + f * (r.lat_hi - r.lat_lo);
        const double lon = r.lon_lo + f * (r.lon_hi - r.lon_lo);
        pts.push_back({lat, r.lon_lo});
        pts.push_back({lat, r.lon_hi});
        pts.push_back({r.lat_lo, lon});
        pts.push_back({r.lat_hi, lon});
    }
    return pts;
}

double sampled_min(const CellId& a, const CellId& b, int per_edge) {
    double best = std::numeric_limits<double>::infinity();
    const auto pa = boundary(a.bounds(), per_edge);
    const auto pb = boundary(b.bounds(), per_edge);
    for (const auto& x : pa) {
        for (const auto& y : pb) best = std::min(best, haversine_km(x, y));
    }
    return best;
}

}  // namespace

TEST_CASE("root cell and level 0") {
    CHECK(cell_at({0.0, 0.0}, 0) == CellId::root());
    CHECK(CellId::root().level() == 0);
    const auto r = CellId::root().bounds();
    CHECK(r.lat_lo == -90.0);
    CHECK(r.lat_hi == 90.0);
    CHECK(r.lon_lo == -180.0);
    CHECK(r.lon_hi == 180.0);
}

TEST_CASE("path and id round trip") {
    Rng rng(11);
    for (int n = 0; n < 2000; ++n) {
        const int level = static_cast<int>(rng.below(CellId::kMaxLevel + 1));
        const CellId c = random_cell(rng, level);
        CHECK(CellId::from_path(c.level(), c.path()) == c);
        CHECK(CellId::from_id(c.id()) == c);
        CHECK(c.token().size() == 16);
    }
    CHECK_THROWS_AS(CellId::from_id(0), std::invalid_argument);
    CHECK_THROWS_AS(CellId::from_path(31, 0), std::invalid_argument);
}

TEST_CASE("hierarchy consistency") {
    Rng rng(12);
    for (int n = 0; n < 2000; ++n) {
        const LatLon p = random_point(rng);
        const int level = 1 + static_cast<int>(rng.below(CellId::kMaxLevel));
        const CellId c = cell_at(p, level);
        CHECK(c.level() == level);
        CHECK(c.bounds().contains(p));
        CHECK(c.parent() == cell_at(p, level - 1));
        CHECK(parent(c, level - 1) == cell_at(p, level - 1));
        CHECK(parent(c, level) == c);
    }
}

TEST_CASE("children tile their parent") {
    Rng rng(13);
    for (int n = 0; n < 300; ++n) {
        const CellId c = random_cell(rng, static_cast<int>(rng.below(CellId::kMaxLevel)));
        const auto r = c.bounds();
        for (int q = 0; q < 4; ++q) {
            const auto cr = c.child(q).bounds();
            CHECK(cr.lat_lo >= r.lat_lo);
            CHECK(cr.lat_hi <= r.lat_hi);
            CHECK(cr.lon_lo >= r.lon_lo);
            CHECK(cr.lon_hi <= r.lon_hi);
            CHECK(c.child(q).parent() == c);
        }
        for (int k = 0; k < 20; ++k) {
            // Mix interior points with points snapped onto the split lines.
            LatLon p{rng.uniform(r.lat_lo, r.lat_hi), rng.uniform(r.lon_lo, r.lon_hi)};
            if (k % 3 == 1) p.lat = (r.lat_lo + r.lat_hi) / 2;
            if (k % 4 == 2) p.lon = (r.lon_lo + r.lon_hi) / 2;
            int owners = 0;
            for (int q = 0; q < 4; ++q) owners += c.child(q).bounds().contains(p) ? 1 : 0;
            CHECK(owners == 1);
        }
    }
}

TEST_CASE("boundary points go to the half-open quadrant") {
    const std::vector<LatLon> pts{{0, 0}, {0, -90}, {45, 0}, {0, 179.999}, {90, 180}, {-90, -180}};
    for (const auto& p : pts) {
        const CellId c = cell_at(p, 1);
        int owners = 0;
        CellId owner;
        for (int q = 0; q < 4; ++q) {
            if (CellId::root().child(q).bounds().contains(p)) {
                ++owners;
                owner = CellId::root().child(q);
            }
        }
        CHECK(owners == 1);
        CHECK(c == owner);
    }
    CHECK(cell_at({0, 0}, 1) == CellId::root().child(3));
    CHECK(cell_at({90, 180}, 1) == CellId::root().child(3));
    CHECK(cell_at({-90, -180}, 1) == CellId::root().child(0));
}

TEST_CASE("parent examples") {
    CHECK(parent(CellId::root().child(2), 0) == CellId::root());
    Rng rng(14);
    for (int n = 0; n < 200; ++n) {
        const CellId c = random_cell(rng, 12);
        CHECK(parent(c, 10) == cell_at(c.center(), 10));
        CHECK(parent(c, 10).path() == c.path() >> 4);
    }
    CHECK_THROWS_AS(parent(CellId::root().child(1), 2), std::invalid_argument);
}

TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(cell_at({0, 0}, 31), std::invalid_argument);
    CHECK_THROWS_AS(cell_at({0, 0}, -1), std::invalid_argument);
    CHECK_THROWS_AS(cell_at({std::nan(""), 0}, 5), std::invalid_argument);
    CHECK_THROWS_AS(cell_at({91, 0}, 5), std::invalid_argument);
    CHECK_THROWS_AS(cell_at({0, std::numeric_limits<double>::infinity()}, 5), std::invalid_argument);
    CHECK_THROWS_AS(cell_distance_km(cell_at({0, 0}, 3), cell_at({0, 0}, 4)), std::invalid_argument);
}

TEST_CASE("haversine") {
    CHECK(haversine_km({12.5, -3.25}, {12.5, -3.25}) == 0.0);
    CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(20015.1).epsilon(0.00001));
    CHECK(haversine_km({0, 0}, {0, 180}) == doctest::Approx(std::numbers::pi * 6371.0088));
    CHECK(haversine_km({0, 0}, {0, 1}) == doctest::Approx(111.19).epsilon(0.0001));
    CHECK(haversine_km({0, 0}, {0, 1}) == doctest::Approx(2 * std::numbers::pi * 6371.0088 / 360));

    Rng rng(15);
    for (int n = 0; n < 1000; ++n) {
        const LatLon a = random_point(rng);
        const LatLon b = random_point(rng);
        CHECK(haversine_km(a, b) == doctest::Approx(haversine_km(b, a)));
        CHECK(haversine_km(a, b) >= 0.0);
        CHECK(haversine_km(a, b) > 0.0);
    }
}

TEST_CASE("cell distance basics") {
    const CellId c = cell_at({40.7, -74.0}, 12);
    CHECK(cell_distance_km(c, c) == 0.0);

    // Edge neighbours at the same level touch.
    const auto r = c.bounds();
    const double dlat = r.lat_hi - r.lat_lo;
    const double dlon = r.lon_hi - r.lon_lo;
    const LatLon mid = r.center();
    for (const LatLon p : {LatLon{mid.lat + dlat, mid.lon}, LatLon{mid.lat - dlat, mid.lon},
                           LatLon{mid.lat, mid.lon + dlon}, LatLon{mid.lat, mid.lon - dlon},
                           LatLon{mid.lat + dlat, mid.lon + dlon}}) {
        const CellId n = cell_at(p, 12);
        CHECK(n != c);
        CHECK(cell_distance_km(c, n) == 0.0);
    }

    // Across the antimeridian.
    const CellId east = cell_at({10.0, 179.99}, 8);
    const CellId west = cell_at({10.0, -179.99}, 8);
    CHECK(cell_distance_km(east, west) == 0.0);
    // Two whole cells of longitude lie between them, about 2 * 1.40625 degrees.
    const CellId west2 = cell_at({10.0, -179.99 + 360.0 / 256 * 2}, 8);
    const double gap_equator = 2 * 360.0 / 256 * kEarthRadiusKm * std::acos(-1.0) / 180;
    CHECK(cell_distance_km(east, west2) > gap_equator * std::cos(11.0 * std::acos(-1.0) / 180));
    CHECK(cell_distance_km(east, west2) < gap_equator);
}

TEST_CASE("cell distance matches boundary sampling") {
    Rng rng(16);
    for (int n = 0; n < 60; ++n) {
        // Nearby disjoint level-12 cells around a random anchor, plus distant pairs.
        const LatLon p{rng.uniform(-70.0, 70.0), rng.uniform(-179.0, 179.0)};
        const double spread = n % 3 == 0 ? 40.0 : 0.5;
        const LatLon q{std::clamp(p.lat + rng.uniform(-spread, spread), -89.9, 89.9),
                       std::clamp(p.lon + rng.uniform(-spread, spread), -179.9, 179.9)};
        const CellId a = cell_at(p, 12);
        const CellId b = cell_at(q, 12);
        const double d = cell_distance_km(a, b);
        const double oracle = sampled_min(a, b, 400);
        if (oracle < 1e-6) {
            CHECK(d < 1e-6);
            continue;
        }
        CHECK(d == doctest::Approx(oracle).epsilon(0.005));
        CHECK(d <= oracle + 1e-9);
        CHECK(cell_distance_km(b, a) == doctest::Approx(d));
    }
}

TEST_CASE("cell distance is a lower bound and shrinks with parents") {
    Rng rng(17);
    for (int n = 0; n < 300; ++n) {
        const int level = 4 + static_cast<int>(rng.below(14));
        const LatLon p = random_point(rng);
        const LatLon q{std::clamp(p.lat + rng.uniform(-5.0, 5.0), -90.0, 90.0),
                       std::clamp(p.lon + rng.uniform(-5.0, 5.0), -180.0, 180.0)};
        const CellId a = cell_at(p, level);
        const CellId b = cell_at(q, level);
        const double d = cell_distance_km(a, b);
        const auto ra = a.bounds();
        const auto rb = b.bounds();
        for (int k = 0; k < 30; ++k) {
            const LatLon x{rng.uniform(ra.lat_lo, ra.lat_hi), rng.uniform(ra.lon_lo, ra.lon_hi)};
            const LatLon y{rng.uniform(rb.lat_lo, rb.lat_hi), rng.uniform(rb.lon_lo, rb.lon_hi)};
            CHECK(d <= haversine_km(x, y) + 1e-9);
        }
        CHECK(cell_distance_km(a.parent(), b.parent()) <= d + 1e-9);
    }
}
