#include "stlink/lsh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace stlink {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

double t_eff_for(int length, int bands) {
    const int rows = length / bands;
    return std::pow(1.0 / bands, 1.0 / rows);
}

}  // namespace

void LshParams::validate() const {
    if (!(t > 0.0 && t < 1.0)) {
        throw std::invalid_argument("LSH threshold t must be in (0, 1)");
    }
    if (step < 1) {
        throw std::invalid_argument("LSH step must be >= 1");
    }
    if (spatial_level < 0 || spatial_level > CellId::kMaxLevel) {
        throw std::invalid_argument("LSH spatial level must be in [0, 30]");
    }
    if (n_buckets < 2) {
        throw std::invalid_argument("LSH needs at least 2 buckets");
    }
}

double BandingPlan::t_eff() const { return std::pow(1.0 / bands, 1.0 / rows); }

BandingPlan BandingPlan::for_signature(int length, double t) {
    const int b = band_count(length, t);
    return {b, length / b};
}

double lambert_w0(double x) {
    constexpr double kBranch = -1.0 / std::numbers::e;
    if (!(x >= kBranch)) {
        throw std::invalid_argument("lambert_w0 is undefined below -1/e");
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (x == kBranch) {
        return -1.0;
    }
    double w;
    if (x < 1.0) {
        w = x > -0.25 ? std::log1p(x) : -1.0 + std::sqrt(2.0 * (1.0 + std::numbers::e * x));
    } else {
        const double l = std::log(x);
        w = l - (l > 1.0 ? std::log(l) : 0.0);
    }
    // Halley iteration.
    for (int it = 0; it < 100; ++it) {
        const double ew = std::exp(w);
        const double f = w * ew - x;
        const double denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        const double next = w - f / denom;
        if (next == w || !std::isfinite(next)) {
            break;
        }
        w = next;
        if (std::abs(w * std::exp(w) - x) <= 1e-12 * std::max(1.0, std::abs(x))) {
            break;
        }
    }
    return w;
}

int band_count(int length, double t) {
    if (length < 1) {
        throw std::invalid_argument("signature length must be >= 1");
    }
    if (!(t > 0.0 && t < 1.0)) {
        throw std::invalid_argument("threshold t must be in (0, 1)");
    }
    const double w = lambert_w0(-static_cast<double>(length) * std::log(t));
    int b = static_cast<int>(std::lround(std::exp(w)));
    b = std::clamp(b, 1, length);

    // Integer rows shift the realized threshold; settle on a local optimum.
    auto err = [&](int bands) { return std::abs(t_eff_for(length, bands) - t); };
    for (;;) {
        int next = b;
        if (b > 1 && err(b - 1) < err(next)) next = b - 1;
        if (b < length && err(b + 1) < err(next)) next = b + 1;
        if (next == b) break;
        b = next;
    }
    return b;
}

SignatureEntry dominating_cell(const MobilityHistory& h, WindowIndex w_begin, WindowIndex w_end,
                               int level) {
    if (level > h.level()) {
        throw std::invalid_argument("dominating_cell level exceeds history level");
    }
    CellCounts counts = h.range_counts(w_begin, w_end);
    if (level < h.level()) {
        counts = rekey(counts, level);
    }
    SignatureEntry best;
    std::uint32_t best_count = 0;
    for (const auto& c : counts) {
        if (c.count > best_count) {
            best = c.cell;
            best_count = c.count;
        }
    }
    return best;
}

int signature_length(WindowIndex total_windows, int step) {
    if (step < 1) {
        throw std::invalid_argument("step must be >= 1");
    }
    if (total_windows < 1) {
        return 0;
    }
    return static_cast<int>((total_windows + step - 1) / step);
}

Signature build_signature(const MobilityHistory& h, const LshParams& params,
                          WindowIndex total_windows) {
    Signature sig{h.entity(), {}};
    const int len = signature_length(total_windows, params.step);
    sig.entries.reserve(static_cast<std::size_t>(len));
    for (int j = 0; j < len; ++j) {
        const WindowIndex lo = static_cast<WindowIndex>(j) * params.step;
        sig.entries.push_back(dominating_cell(h, lo, lo + params.step, params.spatial_level));
    }
    return sig;
}

std::vector<Signature> build_signatures(std::span<const MobilityHistory* const> histories,
                                        const LshParams& params, WindowIndex total_windows) {
    params.validate();
    std::vector<Signature> out;
    out.reserve(histories.size());
    for (const MobilityHistory* h : histories) {
        out.push_back(build_signature(*h, params, total_windows));
    }
    return out;
}

double signature_similarity(const Signature& a, const Signature& b) {
    if (a.entries.size() != b.entries.size()) {
        throw std::invalid_argument("signatures differ in length");
    }
    if (a.entries.empty()) {
        return 0.0;
    }
    std::size_t same = 0;
    for (std::size_t j = 0; j < a.entries.size(); ++j) {
        if (a.entries[j] && b.entries[j] && *a.entries[j] == *b.entries[j]) {
            ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(a.entries.size());
}

std::uint64_t band_hash(int band, std::span<const SignatureEntry> rows, std::uint64_t seed) {
    std::uint64_t h = mix64(seed ^ (0x9e3779b97f4a7c15ULL * (rows.size() + 1)));
    h = mix64(h ^ mix64(static_cast<std::uint64_t>(band) + 0x632be59bd9b4e019ULL));
    for (const auto& r : rows) {
        h = mix64(h ^ mix64(r ? r->id() : 0));
    }
    return h;
}

std::vector<CandidatePair> candidate_pairs(std::span<const Signature> sigs_e,
                                           std::span<const Signature> sigs_i,
                                           const BandingPlan& plan, std::size_t n_buckets,
                                           std::uint64_t seed, BucketStats* stats) {
    if (plan.bands < 1 || plan.rows < 1) {
        throw std::invalid_argument("banding plan needs bands, rows >= 1");
    }
    if (n_buckets < 2) {
        throw std::invalid_argument("LSH needs at least 2 buckets");
    }
    std::size_t length = 0;
    bool have_length = false;
    for (const auto side : {sigs_e, sigs_i}) {
        for (const auto& s : side) {
            if (have_length && s.entries.size() != length) {
                throw std::invalid_argument("signatures differ in length");
            }
            length = s.entries.size();
            have_length = true;
        }
    }
    if (static_cast<std::size_t>(plan.bands) * plan.rows > length) {
        throw std::invalid_argument("banding plan exceeds signature length");
    }

    struct Slot {
        std::uint64_t bucket;
        std::uint8_t side;  // 0: e, 1: i
        std::size_t index;
    };
    std::vector<CandidatePair> out;
    std::vector<Slot> slots;
    for (int band = 0; band < plan.bands; ++band) {
        slots.clear();
        const std::size_t offset = static_cast<std::size_t>(band) * plan.rows;
        auto add = [&](std::span<const Signature> side, std::uint8_t tag) {
            for (std::size_t k = 0; k < side.size(); ++k) {
                const auto rows = std::span(side[k].entries).subspan(offset, plan.rows);
                if (std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r; })) {
                    continue;
                }
                slots.push_back({band_hash(band, rows, seed) % n_buckets, tag, k});
            }
        };
        add(sigs_e, 0);
        add(sigs_i, 1);
        std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
            return std::tie(a.bucket, a.side, a.index) < std::tie(b.bucket, b.side, b.index);
        });
        for (std::size_t lo = 0; lo < slots.size();) {
            std::size_t hi = lo;
            std::size_t first_i = slots.size();
            while (hi < slots.size() && slots[hi].bucket == slots[lo].bucket) {
                if (slots[hi].side == 1 && first_i == slots.size()) first_i = hi;
                ++hi;
            }
            if (stats) {
                ++stats->occupancy[hi - lo];
            }
            if (first_i != slots.size()) {
                for (std::size_t a = lo; a < first_i; ++a) {
                    for (std::size_t b = first_i; b < hi; ++b) {
                        out.push_back({slots[a].index, slots[b].index});
                    }
                }
            }
            lo = hi;
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace stlink
