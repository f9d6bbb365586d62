#include "stlink/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "stlink/random.hpp"

namespace stlink {

namespace {

std::string anon_id(char prefix, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%06zu", prefix, k);
    return buf;
}

}  // namespace

void SampleConfig::validate() const {
    if (!(intersection_ratio >= 0.0 && intersection_ratio <= 1.0)) {
        throw std::invalid_argument("intersection ratio must be in [0, 1]");
    }
    if (!(inclusion_probability > 0.0 && inclusion_probability <= 1.0)) {
        throw std::invalid_argument("inclusion probability must be in (0, 1]");
    }
}

SampledPair sample_pair(std::span<const Record> records, const SampleConfig& cfg) {
    cfg.validate();
    std::map<std::string, std::vector<std::size_t>> by_entity;
    for (std::size_t k = 0; k < records.size(); ++k) {
        if (records[k].valid()) by_entity[records[k].entity].push_back(k);
    }
    std::vector<std::string> universe;
    for (const auto& [id, idx] : by_entity) universe.push_back(id);

    const double rho = cfg.intersection_ratio;
    const auto per_side = static_cast<std::size_t>(std::floor(universe.size() / (2.0 - rho)));
    if (per_side == 0) {
        throw std::invalid_argument("too few entities to sample two datasets");
    }
    const auto common = static_cast<std::size_t>(std::lround(rho * static_cast<double>(per_side)));

    Rng rng(cfg.seed);
    rng.shuffle(std::span(universe));
    // universe = [common | a-only | b-only | unused]
    std::vector<std::string> side_a(universe.begin(), universe.begin() + per_side);
    std::vector<std::string> side_b(universe.begin(), universe.begin() + common);
    side_b.insert(side_b.end(), universe.begin() + per_side,
                  universe.begin() + (2 * per_side - common));
    std::sort(side_a.begin(), side_a.end());
    std::sort(side_b.begin(), side_b.end());

    SampledPair out;
    out.selected_a = side_a.size();
    out.selected_b = side_b.size();
    out.selected_common = common;

    // Anonymized ids follow a shuffled order so they carry no trace of the source ids.
    auto assign_ids = [&](const std::vector<std::string>& side, char prefix) {
        std::vector<std::size_t> perm(side.size());
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        rng.shuffle(std::span(perm));
        std::map<std::string, std::string> ids;
        for (std::size_t k = 0; k < side.size(); ++k) ids[side[k]] = anon_id(prefix, perm[k]);
        return ids;
    };
    const auto ids_a = assign_ids(side_a, 'a');
    const auto ids_b = assign_ids(side_b, 'b');

    std::map<std::string, std::vector<Record>> recs_a;
    std::map<std::string, std::vector<Record>> recs_b;
    for (const auto& [entity, idx] : by_entity) {
        const auto ia = ids_a.find(entity);
        const auto ib = ids_b.find(entity);
        if (ia == ids_a.end() && ib == ids_b.end()) continue;
        for (const std::size_t k : idx) {
            if (ia != ids_a.end() && rng.bernoulli(cfg.inclusion_probability)) {
                Record r = records[k];
                r.entity = ia->second;
                recs_a[r.entity].push_back(std::move(r));
            }
            if (ib != ids_b.end() && rng.bernoulli(cfg.inclusion_probability)) {
                Record r = records[k];
                r.entity = ib->second;
                recs_b[r.entity].push_back(std::move(r));
            }
        }
    }

    auto flatten = [&](std::map<std::string, std::vector<Record>>& by_id, std::vector<Record>& dst) {
        for (auto& [id, recs] : by_id) {
            if (recs.size() <= cfg.min_records) continue;
            std::stable_sort(recs.begin(), recs.end(),
                             [](const Record& x, const Record& y) { return x.t < y.t; });
            dst.insert(dst.end(), recs.begin(), recs.end());
        }
    };
    flatten(recs_a, out.a);
    flatten(recs_b, out.b);

    for (const auto& [entity, a_id] : ids_a) {
        const auto ib = ids_b.find(entity);
        if (ib == ids_b.end()) continue;
        const auto ra = recs_a.find(a_id);
        const auto rb = recs_b.find(ib->second);
        if (ra != recs_a.end() && rb != recs_b.end() && ra->second.size() > cfg.min_records &&
            rb->second.size() > cfg.min_records) {
            out.truth[a_id] = ib->second;
        }
    }
    return out;
}

}  // namespace stlink
