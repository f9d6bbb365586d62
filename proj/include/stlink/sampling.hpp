#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stlink/geo.hpp"
#include "stlink/history.hpp"

namespace stlink {

/// Ground truth: dataset-E entity id -> dataset-I entity id.
using Truth = std::map<std::string, std::string>;

struct SampleConfig {
    double intersection_ratio = 0.5;     // |A ∩ B| / min(|A|, |B|)
    double inclusion_probability = 0.5; // per record, per dataset
    std::uint64_t seed = 1;
    std::size_t min_records = 5;  // entities need more than this many records

    void validate() const;
};

struct SampledPair {
    std::vector<Record> a;
    std::vector<Record> b;
    Truth truth;
    std::size_t selected_a = 0;  // entities per dataset before the record filter
    std::size_t selected_b = 0;
    std::size_t selected_common = 0;
};

/**
 * Splits the entity universe into two equally sized, overlapping datasets.
 * With N entities, each dataset gets n = floor(N / (2 - rho)) entities of which
 * round(rho * n) are shared. Every record of a selected entity enters each
 * dataset independently with the inclusion probability. Entity ids are
 * re-anonymized per dataset.
 */
SampledPair sample_pair(std::span<const Record> records, const SampleConfig& cfg);

enum class MobilityModel { RandomWalk, Hotspot };

struct SyntheticConfig {
    std::size_t n_entities = 200;
    std::size_t steps = 1000;
    double step_minutes = 15.0;
    double alpha = 2.0;  // km per minute bound on displacement
    MobilityModel model = MobilityModel::Hotspot;
    LatLonRect bbox{40.45, 40.95, -74.30, -73.70};
    int hotspots = 3;           // per entity, the first one is home
    double revisit_prob = 0.35; // head for a hotspot instead of roaming
    double dwell_prob = 0.6;    // stay put while at a hotspot
    double roam_km = 4.0;       // upper bound of a roaming move
    std::int64_t start_time = 1'600'000'000;
    bool time_jitter = true;    // offset each record within its step
    std::uint64_t seed = 1;
};

/// One trace per entity; consecutive records never move faster than alpha.
std::vector<Record> gen_synthetic(const SyntheticConfig& cfg);

}  // namespace stlink
