#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "stlink/lsh.hpp"
#include "stlink/random.hpp"

using namespace stlink;

namespace {

CellId leaf_cell(std::uint64_t k) { return CellId::from_path(30, k); }

// Two signatures of length s agreeing on exactly `m` positions chosen at random.
std::pair<Signature, Signature> pair_with_matches(Rng& rng, int s, int m, std::uint64_t salt) {
    std::vector<int> pos(s);
    std::iota(pos.begin(), pos.end(), 0);
    rng.shuffle(std::span<int>(pos));
    Signature a{"a", std::vector<SignatureEntry>(s)};
    Signature b{"b", std::vector<SignatureEntry>(s)};
    for (int k = 0; k < s; ++k) {
        const std::uint64_t base = (salt * s + pos[k]) * 4;
        a.entries[pos[k]] = leaf_cell(base);
        b.entries[pos[k]] = k < m ? leaf_cell(base) : leaf_cell(base + 1);
    }
    return {a, b};
}

double s_curve(double t, const BandingPlan& p) {
    return 1.0 - std::pow(1.0 - std::pow(t, p.rows), p.bands);
}

MobilityHistory history_from(const std::string& id, int level,
                             const std::vector<std::pair<WindowIndex, CellId>>& visits) {
    std::map<WindowIndex, std::map<CellId, std::uint32_t>> m;
    for (const auto& [w, c] : visits) ++m[w][c];
    std::vector<WindowCells> leaves;
    for (const auto& [w, cells] : m) {
        WindowCells wc{w, {}};
        for (const auto& [c, n] : cells) wc.cells.push_back({c, n});
        leaves.push_back(wc);
    }
    return MobilityHistory(id, level, leaves);
}

}  // namespace

TEST_CASE("lambert w inverts") {
    for (int k = 0; k <= 600; ++k) {
        const double x = std::pow(10.0, -3.0 + 6.0 * k / 600.0);
        const double w = lambert_w0(x);
        CHECK(std::abs(w * std::exp(w) - x) <= 1e-9);
    }
    CHECK(lambert_w0(0.0) == 0.0);
    CHECK(lambert_w0(std::exp(1.0)) == doctest::Approx(1.0));
    CHECK(lambert_w0(-1.0 / std::exp(1.0)) == doctest::Approx(-1.0));
    CHECK(lambert_w0(-0.2) == doctest::Approx(-0.2591711018));
    CHECK_THROWS_AS(lambert_w0(-1.0), std::invalid_argument);
}

TEST_CASE("band count examples") {
    CHECK(band_count(4, std::sqrt(0.5)) == 2);
    const auto plan = BandingPlan::for_signature(4, std::sqrt(0.5));
    CHECK(plan.bands == 2);
    CHECK(plan.rows == 2);
    CHECK(plan.t_eff() == doctest::Approx(std::sqrt(0.5)));

    // Scan oracle over every band count with fractional rows.
    int best = 1;
    for (int b = 1; b <= 20; ++b) {
        auto err = [](int x) { return std::abs(std::pow(1.0 / x, x / 20.0) - 0.6); };
        if (err(b) < err(best)) best = b;
    }
    CHECK(best == 6);
    CHECK(band_count(20, 0.6) == best);

    CHECK(band_count(1, 0.6) == 1);
    CHECK_THROWS_AS(band_count(0, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(band_count(10, 1.0), std::invalid_argument);
}

TEST_CASE("band count inverse and local optimality") {
    Rng rng(51);
    for (int n = 0; n < 500; ++n) {
        const int s = 1 + static_cast<int>(rng.below(400));
        const double t = rng.uniform(0.05, 0.95);
        const double bstar = std::exp(lambert_w0(-s * std::log(t)));
        CHECK(std::pow(1.0 / bstar, bstar / s) == doctest::Approx(t).epsilon(1e-9));

        const int b = band_count(s, t);
        CHECK(b >= 1);
        CHECK(b <= s);
        const auto plan = BandingPlan::for_signature(s, t);
        CHECK(plan.bands * plan.rows <= s);
        CHECK(plan.rows == s / plan.bands);
        auto err = [&](int x) { return std::abs(std::pow(1.0 / x, 1.0 / (s / x)) - t); };
        if (b > 1) CHECK(err(b) <= err(b - 1));
        if (b < s) CHECK(err(b) <= err(b + 1));
    }
}

TEST_CASE("dominating cell") {
    const CellId circle = cell_at({40.70, -74.00}, 16);
    const CellId square = cell_at({40.75, -73.95}, 16);
    const auto h = history_from("u", 16,
                                {{0, circle}, {0, circle}, {1, circle}, {1, square}, {2, square}});
    CHECK(dominating_cell(h, 0, 3, 16) == circle);
    CHECK(dominating_cell(h, 1, 3, 16) == square);
    CHECK(!dominating_cell(h, 5, 9, 16).has_value());
    CHECK(dominating_cell(h, 2, 3, 16) == square);
    // Tie: the smaller id wins.
    CHECK(dominating_cell(h, 1, 2, 16) == std::min(circle, square));
    CHECK(dominating_cell(h, 0, 3, 8) == parent(circle, 8));
    CHECK_THROWS_AS(dominating_cell(h, 0, 3, 17), std::invalid_argument);
}

TEST_CASE("signatures over twelve windows") {
    const CellId circle = cell_at({40.70, -74.00}, 16);
    const CellId square = cell_at({40.75, -73.95}, 16);
    const CellId star = cell_at({40.80, -73.90}, 16);
    // 12 windows, queried three at a time.
    const auto u = history_from("u", 16, {{0, circle}, {1, circle}, {2, square}, {3, square},
                                          {5, square}, {7, circle}, {10, star}});
    const auto v = history_from("v", 16, {{0, circle}, {2, circle}, {4, square}, {8, star}});
    LshParams p;
    p.step = 3;
    const auto su = build_signature(u, p, 12);
    const auto sv = build_signature(v, p, 12);
    REQUIRE(su.entries.size() == 4);
    REQUIRE(sv.entries.size() == 4);
    CHECK(su.entries[0] == circle);
    CHECK(su.entries[1] == square);
    CHECK(sv.entries[1] == square);
    CHECK(!sv.entries[3].has_value());
    CHECK(signature_similarity(su, sv) == doctest::Approx(0.5));

    const std::vector<Signature> e{su}, i{sv};
    const auto pairs = candidate_pairs(e, i, BandingPlan{2, 2}, 4096);
    CHECK(pairs == std::vector<CandidatePair>{{0, 0}});
}

TEST_CASE("signature edge cases") {
    LshParams p;
    p.step = 4;
    const MobilityHistory empty("z", 16, {});
    const auto se = build_signature(empty, p, 10);
    CHECK(se.entries.size() == 3);
    CHECK(std::none_of(se.entries.begin(), se.entries.end(), [](auto& x) { return x.has_value(); }));

    const CellId c = cell_at({1, 1}, 16);
    std::vector<std::pair<WindowIndex, CellId>> visits;
    for (WindowIndex w = 0; w < 10; ++w) visits.push_back({w, c});
    const auto sc = build_signature(history_from("c", 16, visits), p, 10);
    CHECK(std::all_of(sc.entries.begin(), sc.entries.end(), [&](auto& x) { return x == c; }));
    CHECK(signature_similarity(sc, sc) == 1.0);
    CHECK(signature_similarity(se, se) == 0.0);
    CHECK(signature_length(0, 4) == 0);
    CHECK(signature_length(12, 3) == 4);
    CHECK(signature_length(13, 3) == 5);
}

TEST_CASE("placeholders and trailing rows") {
    const CellId c = cell_at({1, 1}, 16);
    const CellId d = cell_at({2, 2}, 16);
    Signature a{"a", {c, std::nullopt, c, c, d}};
    Signature b{"b", {c, std::nullopt, c, c, c}};
    // Band 0 holds the placeholder, band 1 matches, entry 4 is trailing.
    CHECK(candidate_pairs(std::vector{a}, std::vector{b}, BandingPlan{2, 2}, 1 << 20).size() == 1);
    Signature a2{"a", {c, std::nullopt, d, c, c}};
    Signature b2{"b", {c, std::nullopt, c, c, c}};
    CHECK(candidate_pairs(std::vector{a2}, std::vector{b2}, BandingPlan{2, 2}, 1 << 20).empty());
    // Identical placeholder bands never collide.
    Signature p1{"p", {std::nullopt, std::nullopt}};
    CHECK(candidate_pairs(std::vector{p1}, std::vector{p1}, BandingPlan{1, 2}, 1 << 20).empty());
    CHECK_THROWS_AS(candidate_pairs(std::vector{a}, std::vector{p1}, BandingPlan{1, 2}, 64),
                    std::invalid_argument);
    CHECK_THROWS_AS(candidate_pairs(std::vector{a}, std::vector{b}, BandingPlan{3, 2}, 64),
                    std::invalid_argument);
}

TEST_CASE("identical signatures always collide") {
    Rng rng(52);
    for (int n = 0; n < 200; ++n) {
        auto [a, b] = pair_with_matches(rng, 30, 30, n);
        const auto plan = BandingPlan::for_signature(30, 0.6);
        CHECK(candidate_pairs(std::vector{a}, std::vector{b}, plan, 4096).size() == 1);
    }
}

TEST_CASE("hash collisions of unrelated signatures") {
    Rng rng(53);
    const BandingPlan plan{4, 2};
    const std::size_t buckets = 64;
    const int trials = 20000;
    int hits = 0;
    for (int n = 0; n < trials; ++n) {
        auto [a, b] = pair_with_matches(rng, 8, 0, n);
        hits += candidate_pairs(std::vector{a}, std::vector{b}, plan, buckets).size();
    }
    const double expected = 1.0 - std::pow(1.0 - 1.0 / buckets, plan.bands);
    CHECK(std::abs(static_cast<double>(hits) / trials - expected) < 0.01);

    int rare = 0;
    for (int n = 0; n < 2000; ++n) {
        auto [a, b] = pair_with_matches(rng, 8, 0, trials + n);
        rare += candidate_pairs(std::vector{a}, std::vector{b}, plan, std::size_t{1} << 40).size();
    }
    CHECK(rare == 0);
}

TEST_CASE("candidate probability follows the S-curve") {
    Rng rng(54);
    const int s = 1000;
    const auto plan = BandingPlan::for_signature(s, 0.6);
    for (const double t : {0.2, 0.5, 0.6, 0.9}) {
        const int trials = 10000;
        int hits = 0;
        for (int n = 0; n < trials; ++n) {
            auto [a, b] = pair_with_matches(rng, s, static_cast<int>(std::lround(t * s)), n);
            hits += candidate_pairs(std::vector{a}, std::vector{b}, plan, std::size_t{1} << 40)
                        .size();
        }
        CHECK(std::abs(static_cast<double>(hits) / trials - s_curve(t, plan)) <= 0.03);
    }
}

TEST_CASE("bucket statistics and determinism") {
    Rng rng(55);
    std::vector<Signature> e, i;
    for (int n = 0; n < 50; ++n) {
        auto [a, b] = pair_with_matches(rng, 40, static_cast<int>(rng.below(41)), n);
        a.entity = "a" + std::to_string(n);
        b.entity = "b" + std::to_string(n);
        e.push_back(a);
        i.push_back(b);
    }
    const auto plan = BandingPlan::for_signature(40, 0.6);
    BucketStats st;
    const auto p1 = candidate_pairs(e, i, plan, 256, 7, &st);
    const auto p2 = candidate_pairs(e, i, plan, 256, 7);
    CHECK(p1 == p2);
    CHECK(std::is_sorted(p1.begin(), p1.end()));
    std::size_t slots = 0;
    for (const auto& [size, count] : st.occupancy) slots += size * count;
    CHECK(slots <= static_cast<std::size_t>(plan.bands) * 100);
    CHECK(band_hash(0, e[0].entries, 1) != band_hash(1, e[0].entries, 1));
    CHECK(band_hash(0, e[0].entries, 1) != band_hash(0, e[0].entries, 2));
}
