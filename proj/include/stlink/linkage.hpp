#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlink/errors.hpp"

namespace stlink {

/// A scored cross-dataset pair: u from the first dataset, v from the second.
struct WeightedEdge {
    std::string u;
    std::string v;
    double weight = 0.0;

    friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct GaussianComponent {
    double weight = 0.0;
    double mean = 0.0;
    double stddev = 1.0;
};

/// Two-component univariate mixture, components ordered by mean.
struct GmmFit {
    std::array<GaussianComponent, 2> components;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;

    const GaussianComponent& low() const { return components[0]; }
    const GaussianComponent& high() const { return components[1]; }
};

struct GmmOptions {
    int max_iter = 200;
    double tol = 1e-8;             // relative log-likelihood change
    double variance_floor = 1e-6;  // fraction of the sample variance
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct LinkageResult {
    std::vector<WeightedEdge> matched;
    std::vector<WeightedEdge> linked;
    double threshold = 0.0;
    std::optional<GmmFit> gmm;
    /// Set when the mixture could not be fitted; `linked` then equals `matched`.
    bool unfiltered = false;
    std::string note;
};

/// Greedy maximum-weight matching: edges in descending weight (ties by u, v)
/// are taken whenever both endpoints are still free.
std::vector<WeightedEdge> greedy_match(std::span<const WeightedEdge> edges);

/// EM fit of two univariate Gaussians. Throws DegenerateInputError for fewer
/// than 4 samples or zero variance.
GmmFit fit_gmm2(std::span<const double> samples, const GmmOptions& opts = {});

double normal_cdf(double z);

/// Expected precision, recall and F1 when keeping scores >= s, taking the
/// high-mean component as true links.
Prf expected_prf(const GmmFit& fit, double s);

inline constexpr int kThresholdGridPoints = 10001;

/// Score maximizing expected F1 over a uniform grid on
/// [mu_low - 4 sigma_low, mu_high + 4 sigma_high]; ties go to the smaller score.
double stop_threshold(const GmmFit& fit);

LinkageResult link(std::span<const WeightedEdge> edges, const GmmOptions& opts = {});

}  // namespace stlink
