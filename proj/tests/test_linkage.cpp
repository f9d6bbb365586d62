#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "stlink/linkage.hpp"
#include "stlink/random.hpp"

using namespace stlink;

namespace {

// Picks the heaviest edge whose endpoints are both free, scanning all edges each step.
std::vector<WeightedEdge> greedy_oracle(std::vector<WeightedEdge> edges) {
    std::vector<WeightedEdge> out;
    std::set<std::string> used_u, used_v;
    for (;;) {
        const WeightedEdge* best = nullptr;
        for (const auto& e : edges) {
            if (used_u.count(e.u) || used_v.count(e.v)) continue;
            if (!best || e.weight > best->weight ||
                (e.weight == best->weight && std::tie(e.u, e.v) < std::tie(best->u, best->v))) {
                best = &e;
            }
        }
        if (!best) break;
        used_u.insert(best->u);
        used_v.insert(best->v);
        out.push_back(*best);
    }
    return out;
}

std::vector<WeightedEdge> random_graph(Rng& rng, int side, double density) {
    std::vector<WeightedEdge> edges;
    for (int a = 0; a < side; ++a) {
        for (int b = 0; b < side; ++b) {
            if (!rng.bernoulli(density)) continue;
            // Small integer weights make ties common.
            edges.push_back({"u" + std::to_string(a), "v" + std::to_string(b),
                             1.0 + static_cast<double>(rng.below(6))});
        }
    }
    return edges;
}

struct Labeled {
    std::vector<double> x;
    std::vector<bool> positive;
};

Labeled mixture(Rng& rng, std::size_t n, double c2, GaussianComponent lo, GaussianComponent hi) {
    Labeled out;
    for (std::size_t k = 0; k < n; ++k) {
        const bool pos = rng.bernoulli(c2);
        out.positive.push_back(pos);
        out.x.push_back(pos ? rng.normal(hi.mean, hi.stddev) : rng.normal(lo.mean, lo.stddev));
    }
    return out;
}

double empirical_f1(const Labeled& d, double s) {
    std::size_t tp = 0, kept = 0, pos = 0;
    for (std::size_t k = 0; k < d.x.size(); ++k) {
        pos += d.positive[k];
        if (d.x[k] >= s) {
            ++kept;
            tp += d.positive[k];
        }
    }
    const double p = kept ? static_cast<double>(tp) / kept : 1.0;
    const double r = pos ? static_cast<double>(tp) / pos : 1.0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

GmmFit make_fit(double c1, double m1, double s1, double m2, double s2) {
    GmmFit f;
    f.components[0] = {c1, m1, s1};
    f.components[1] = {1.0 - c1, m2, s2};
    return f;
}

}  // namespace

TEST_CASE("greedy match examples") {
    const std::vector<WeightedEdge> one{{"a", "x", 2.0}};
    CHECK(greedy_match(one) == one);
    const std::vector<WeightedEdge> shared{{"a", "x", 3.0}, {"a", "y", 5.0}};
    CHECK(greedy_match(shared) == std::vector<WeightedEdge>{{"a", "y", 5.0}});
    CHECK(greedy_match({}).empty());
}

TEST_CASE("greedy match equals the re-scan oracle") {
    Rng rng(41);
    for (int n = 0; n < 1000; ++n) {
        const auto edges = random_graph(rng, 6, 0.6);
        const auto got = greedy_match(edges);
        CHECK(got == greedy_oracle(edges));
        std::set<std::string> su, sv;
        for (const auto& e : got) {
            CHECK(su.insert(e.u).second);
            CHECK(sv.insert(e.v).second);
        }
        auto scaled = edges;
        for (auto& e : scaled) e.weight *= 3.7;
        const auto got_scaled = greedy_match(scaled);
        REQUIRE(got_scaled.size() == got.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            CHECK(got_scaled[k].u == got[k].u);
            CHECK(got_scaled[k].v == got[k].v);
        }
    }
}

TEST_CASE("normal cdf") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447461));
    CHECK(normal_cdf(-1.96) == doctest::Approx(0.0249978951));
}

TEST_CASE("gmm recovers a two-component mixture") {
    Rng rng(42);
    std::vector<double> x;
    for (int k = 0; k < 1000; ++k) x.push_back(rng.normal(1.0, 0.2));
    for (int k = 0; k < 1000; ++k) x.push_back(rng.normal(5.0, 0.5));
    const GmmFit f = fit_gmm2(x);
    CHECK(f.low().mean == doctest::Approx(1.0).epsilon(0.1));
    CHECK(f.high().mean == doctest::Approx(5.0).epsilon(0.1));
    CHECK(std::abs(f.low().weight - 0.5) < 0.1);
    CHECK(std::abs(f.high().weight - 0.5) < 0.1);
    CHECK(f.low().weight + f.high().weight == doctest::Approx(1.0));
    CHECK(f.low().mean <= f.high().mean);
    CHECK(f.converged);
    CHECK(f.iterations <= 200);
    CHECK(std::isfinite(f.log_likelihood));

    const double s = stop_threshold(f);
    CHECK(s > f.low().mean);
    CHECK(s < f.high().mean);
    const double best = expected_prf(f, s).f1;
    for (int k = 0; k < 1000; ++k) {
        const double probe = rng.uniform(-2.0, 8.0);
        CHECK(best >= expected_prf(f, probe).f1);
    }
}

TEST_CASE("gmm degenerate inputs") {
    CHECK_THROWS_AS(fit_gmm2(std::vector<double>{1, 2, 3}), DegenerateInputError);
    CHECK_THROWS_AS(fit_gmm2(std::vector<double>{2, 2, 2, 2, 2}), DegenerateInputError);

    Rng rng(43);
    std::vector<double> x;
    for (int k = 0; k < 200; ++k) x.push_back(7.0 + 1e-9 * rng.uniform(-1, 1));
    const GmmFit f = fit_gmm2(x);
    CHECK(f.low().mean == doctest::Approx(7.0));
    CHECK(f.high().mean == doctest::Approx(7.0));
    CHECK(f.low().stddev > 0);
    CHECK(f.high().stddev > 0);
}

TEST_CASE("gmm splits well separated clusters exactly") {
    std::vector<double> x;
    for (int k = -5; k <= 5; ++k) x.push_back(1.0 + 0.02 * k);
    for (int k = -5; k <= 5; ++k) x.push_back(10.0 + 0.02 * k);
    const GmmFit f = fit_gmm2(x);
    auto density = [](double v, const GaussianComponent& c) {
        const double z = (v - c.mean) / c.stddev;
        return c.weight * std::exp(-0.5 * z * z) / c.stddev;
    };
    for (const double v : x) {
        const double a = density(v, f.low());
        const double b = density(v, f.high());
        const double resp_high = b / (a + b);
        if (v < 5) {
            CHECK(resp_high < 0.01);
        } else {
            CHECK(resp_high > 0.99);
        }
    }
}

TEST_CASE("expected precision and recall") {
    const GmmFit sym = make_fit(0.5, 0.0, 1.0, 2.0, 1.0);
    const Prf p = expected_prf(sym, 1.0);
    CHECK(p.recall == doctest::Approx(0.42067).epsilon(1e-4));
    CHECK(p.precision == doctest::Approx(0.84134).epsilon(1e-4));
    CHECK(p.f1 == doctest::Approx(0.56090).epsilon(1e-4));

    const Prf low = expected_prf(sym, -1e6);
    CHECK(low.recall == doctest::Approx(0.5));
    CHECK(low.precision == doctest::Approx(0.5));
    const Prf high = expected_prf(sym, 1e6);
    CHECK(high.recall == 0.0);
    CHECK(high.f1 == 0.0);
    CHECK(high.precision == 1.0);

    const GmmFit f = make_fit(0.7, 1.0, 0.5, 3.0, 0.8);
    double prev = 1.0;
    for (int k = 0; k <= 400; ++k) {
        const Prf q = expected_prf(f, -2.0 + 0.02 * k);
        CHECK(q.recall <= prev);
        CHECK(q.recall >= 0.0);
        CHECK(q.precision >= 0.0);
        CHECK(q.precision <= 1.0);
        prev = q.recall;
    }
}

TEST_CASE("expected precision and recall match Monte Carlo") {
    const GmmFit f = make_fit(0.6, 1.0, 0.6, 2.5, 0.7);
    Rng rng(44);
    const auto d = mixture(rng, 1'000'000, f.high().weight, f.low(), f.high());
    for (const double s : {0.5, 1.5, 2.0, 3.0}) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t k = 0; k < d.x.size(); ++k) {
            if (d.x[k] < s) continue;
            (d.positive[k] ? tp : fp) += 1;
        }
        const double r = static_cast<double>(tp) / d.x.size();
        const double pr = static_cast<double>(tp) / (tp + fp);
        const Prf e = expected_prf(f, s);
        CHECK(std::abs(e.recall - r) < 0.01);
        CHECK(std::abs(e.precision - pr) < 0.01);
    }
}

TEST_CASE("stop threshold edge cases") {
    CHECK(stop_threshold(make_fit(0.5, 0.0, 1.0, 6.0, 1.0)) > 0.0);
    CHECK(stop_threshold(make_fit(0.5, 0.0, 1.0, 6.0, 1.0)) < 6.0);
    // No false component: filtering only loses recall.
    const GmmFit single = make_fit(0.0, 0.0, 1.0, 6.0, 1.0);
    CHECK(stop_threshold(single) == doctest::Approx(-4.0));
}

TEST_CASE("threshold is near the empirical optimum under known labels") {
    Rng rng(45);
    const auto d = mixture(rng, 2000, 0.5, {0.5, 1.0, 0.2}, {0.5, 5.0, 0.5});
    const GmmFit f = fit_gmm2(d.x);
    const double s = stop_threshold(f);
    const double lo = f.low().mean - 4 * f.low().stddev;
    const double hi = f.high().mean + 4 * f.high().stddev;
    double best = 0.0;
    for (int k = 0; k < kThresholdGridPoints; ++k) {
        best = std::max(best, empirical_f1(d, lo + (hi - lo) * k / (kThresholdGridPoints - 1)));
    }
    CHECK(empirical_f1(d, s) >= best - 0.05);
}

TEST_CASE("link composes matching, fit and filter") {
    Rng rng(46);
    std::vector<WeightedEdge> edges;
    for (int a = 0; a < 40; ++a) {
        for (int b = 0; b < 40; ++b) {
            const bool truth = a == b && a < 25;
            const double w = truth ? rng.normal(50, 5) : rng.normal(8, 3);
            edges.push_back({"u" + std::to_string(a), "v" + std::to_string(b), w});
        }
    }
    edges.push_back({"u99", "v99", -3.0});
    const auto r = link(edges);
    CHECK(!r.unfiltered);
    REQUIRE(r.gmm.has_value());
    CHECK(r.linked.size() == 25);
    for (const auto& e : r.linked) {
        CHECK(e.weight >= r.threshold);
        CHECK(std::find(r.matched.begin(), r.matched.end(), e) != r.matched.end());
    }
    for (const auto& e : r.matched) {
        CHECK(e.weight > 0.0);
        CHECK(e.u != "u99");
    }
    // Raising the cut never adds links.
    std::size_t prev = r.matched.size() + 1;
    for (double cut = 0; cut < 80; cut += 2) {
        std::size_t n = 0;
        for (const auto& e : r.matched) n += e.weight >= cut;
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("link with too few edges stays unfiltered") {
    const std::vector<WeightedEdge> edges{{"a", "x", 3}, {"b", "y", 2}, {"a", "y", 1}};
    const auto r = link(edges);
    CHECK(r.unfiltered);
    CHECK(!r.gmm.has_value());
    CHECK(r.linked == r.matched);
    CHECK(r.matched.size() == 2);
    CHECK(!r.note.empty());
}
