#include "stlink/metrics.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace stlink {

double f1_of(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Metrics evaluate(std::span<const WeightedEdge> linked, const Truth& truth,
                 std::optional<std::span<const WeightedEdge>> all_scores, std::size_t k) {
    Metrics m;
    m.k = k;
    for (const auto& e : linked) {
        const auto it = truth.find(e.u);
        if (it != truth.end() && it->second == e.v) {
            ++m.tp;
        } else {
            ++m.fp;
        }
    }
    m.fn = truth.size() - m.tp;
    m.precision = linked.empty() ? 1.0 : static_cast<double>(m.tp) / linked.size();
    m.recall = truth.empty() ? 1.0 : static_cast<double>(m.tp) / truth.size();
    m.f1 = f1_of(m.precision, m.recall);

    if (all_scores && !truth.empty() && k > 0) {
        std::map<std::string_view, std::vector<const WeightedEdge*>> by_u;
        for (const auto& e : *all_scores) {
            if (truth.contains(e.u)) by_u[e.u].push_back(&e);
        }
        double total = 0.0;
        for (const auto& [u, v] : truth) {
            const auto it = by_u.find(u);
            if (it == by_u.end()) continue;
            auto& cands = it->second;
            std::sort(cands.begin(), cands.end(), [](const WeightedEdge* a, const WeightedEdge* b) {
                if (a->weight != b->weight) return a->weight > b->weight;
                return a->v < b->v;
            });
            for (std::size_t rank = 0; rank < cands.size(); ++rank) {
                if (cands[rank]->v == v) {
                    if (rank < k) {
                        total += static_cast<double>(k - rank) / static_cast<double>(k);
                    }
                    break;
                }
            }
        }
        m.hit_precision_at_k = total / static_cast<double>(truth.size());
    }
    return m;
}

Metrics evaluate(const LinkageResult& result, const Truth& truth,
                 std::optional<std::span<const WeightedEdge>> all_scores, std::size_t k) {
    return evaluate(result.linked, truth, all_scores, k);
}

}  // namespace stlink
