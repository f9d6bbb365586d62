#include "stlink/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace stlink {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln(sqrt(2*pi))

double log_normal_pdf(double x, double mean, double var) {
    const double z = x - mean;
    return -0.5 * z * z / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

double upper_tail(double x, const GaussianComponent& c) {
    return 0.5 * std::erfc((x - c.mean) / (c.stddev * std::numbers::sqrt2));
}

}  // namespace

std::vector<WeightedEdge> greedy_match(std::span<const WeightedEdge> edges) {
    std::vector<const WeightedEdge*> order;
    order.reserve(edges.size());
    for (const auto& e : edges) {
        order.push_back(&e);
    }
    std::sort(order.begin(), order.end(), [](const WeightedEdge* a, const WeightedEdge* b) {
        if (a->weight != b->weight) {
            return a->weight > b->weight;
        }
        if (a->u != b->u) {
            return a->u < b->u;
        }
        return a->v < b->v;
    });
    std::unordered_set<std::string> used_u;
    std::unordered_set<std::string> used_v;
    std::vector<WeightedEdge> out;
    for (const WeightedEdge* e : order) {
        if (used_u.contains(e->u) || used_v.contains(e->v)) {
            continue;
        }
        used_u.insert(e->u);
        used_v.insert(e->v);
        out.push_back(*e);
    }
    return out;
}

GmmFit fit_gmm2(std::span<const double> samples, const GmmOptions& opts) {
    const std::size_t n = samples.size();
    if (n < 4) {
        throw DegenerateInputError("GMM fit needs at least 4 samples, got " + std::to_string(n));
    }
    double mean = 0.0;
    for (const double x : samples) {
        mean += x;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double x : samples) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(n);
    if (!(var > 0.0) || !std::isfinite(var)) {
        throw DegenerateInputError("GMM fit needs samples with nonzero variance");
    }
    const double var_floor = opts.variance_floor * var;

    // Median split of the sorted samples seeds the two components.
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = n / 2;
    auto moments = [&](std::size_t lo, std::size_t hi) {
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i) m += sorted[i];
        m /= static_cast<double>(hi - lo);
        double v = 0.0;
        for (std::size_t i = lo; i < hi; ++i) v += (sorted[i] - m) * (sorted[i] - m);
        v /= static_cast<double>(hi - lo);
        return std::pair{m, std::max(v, var_floor)};
    };
    std::array<double, 2> w{0.5, 0.5};
    std::array<double, 2> mu{};
    std::array<double, 2> sig2{};
    std::tie(mu[0], sig2[0]) = moments(0, half);
    std::tie(mu[1], sig2[1]) = moments(half, n);

    GmmFit fit;
    std::vector<double> resp(n);  // responsibility of component 1
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opts.max_iter; ++it) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double l0 = std::log(w[0]) + log_normal_pdf(samples[i], mu[0], sig2[0]);
            const double l1 = std::log(w[1]) + log_normal_pdf(samples[i], mu[1], sig2[1]);
            const double top = std::max(l0, l1);
            const double lse = top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
            resp[i] = std::exp(l1 - lse);
            ll += lse;
        }

        std::array<double, 2> nk{};
        std::array<double, 2> sum{};
        for (std::size_t i = 0; i < n; ++i) {
            nk[1] += resp[i];
            nk[0] += 1.0 - resp[i];
            sum[1] += resp[i] * samples[i];
            sum[0] += (1.0 - resp[i]) * samples[i];
        }
        for (int k = 0; k < 2; ++k) {
            if (nk[k] <= std::numeric_limits<double>::min()) {
                w[k] = 0.0;
                continue;
            }
            mu[k] = sum[k] / nk[k];
            double s2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = k == 1 ? resp[i] : 1.0 - resp[i];
                s2 += r * (samples[i] - mu[k]) * (samples[i] - mu[k]);
            }
            sig2[k] = std::max(s2 / nk[k], var_floor);
            w[k] = nk[k] / static_cast<double>(n);
        }

        fit.iterations = it;
        fit.log_likelihood = ll;
        if (std::isfinite(prev_ll) &&
            std::abs(ll - prev_ll) <= opts.tol * std::max(1.0, std::abs(prev_ll))) {
            fit.converged = true;
            break;
        }
        prev_ll = ll;
    }

    const int lo = mu[0] <= mu[1] ? 0 : 1;
    const int hi = 1 - lo;
    fit.components[0] = {w[lo], mu[lo], std::sqrt(sig2[lo])};
    fit.components[1] = {w[hi], mu[hi], std::sqrt(sig2[hi])};
    return fit;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Prf expected_prf(const GmmFit& fit, double s) {
    Prf out;
    out.recall = fit.high().weight * upper_tail(s, fit.high());
    const double false_pos = fit.low().weight * upper_tail(s, fit.low());
    const double kept = out.recall + false_pos;
    out.precision = kept > 0.0 ? out.recall / kept : 1.0;
    const double denom = out.precision + out.recall;
    out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

double stop_threshold(const GmmFit& fit) {
    const double lo = fit.low().mean - 4.0 * fit.low().stddev;
    const double hi = fit.high().mean + 4.0 * fit.high().stddev;
    double best_s = lo;
    double best_f1 = -1.0;
    for (int i = 0; i < kThresholdGridPoints; ++i) {
        const double s = lo + (hi - lo) * i / (kThresholdGridPoints - 1);
        const double f1 = expected_prf(fit, s).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_s = s;
        }
    }
    return best_s;
}

LinkageResult link(std::span<const WeightedEdge> edges, const GmmOptions& opts) {
    std::vector<WeightedEdge> positive;
    positive.reserve(edges.size());
    for (const auto& e : edges) {
        if (e.weight > 0.0) {
            positive.push_back(e);
        }
    }

    LinkageResult out;
    out.matched = greedy_match(positive);
    std::vector<double> weights;
    weights.reserve(out.matched.size());
    for (const auto& e : out.matched) {
        weights.push_back(e.weight);
    }
    try {
        out.gmm = fit_gmm2(weights, opts);
        out.threshold = stop_threshold(*out.gmm);
        for (const auto& e : out.matched) {
            if (e.weight >= out.threshold) {
                out.linked.push_back(e);
            }
        }
    } catch (const DegenerateInputError& err) {
        out.unfiltered = true;
        out.note = err.what();
        out.threshold = 0.0;
        out.linked = out.matched;
    }
    return out;
}

}  // namespace stlink
