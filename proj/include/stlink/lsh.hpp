#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlink/history.hpp"

namespace stlink {

inline constexpr std::uint64_t kDefaultBandSeed = 0x5eed5113a11b1e55ULL;

struct LshParams {
    double t = 0.6;                 // candidate similarity threshold
    int step = 48;                  // query window, in leaf windows
    int spatial_level = 16;         // level of the dominating cells
    std::size_t n_buckets = 4096;
    std::uint64_t seed = kDefaultBandSeed;

    void validate() const;
};

/// A dominating cell, or nullopt for a placeholder (no records in the query).
using SignatureEntry = std::optional<CellId>;

struct Signature {
    std::string entity;
    std::vector<SignatureEntry> entries;
};

struct BandingPlan {
    int bands = 1;
    int rows = 1;

    /// Threshold actually realized by the plan, (1/b)^(1/r).
    double t_eff() const;
    static BandingPlan for_signature(int length, double t);
};

/// Principal branch of the Lambert W function, for x >= -1/e.
double lambert_w0(double x);

/// Band count for signatures of `length` entries and threshold t.
int band_count(int length, double t);

/// Most visited cell over windows [w_begin, w_end) at `level` (ties: smallest
/// id); nullopt when the range holds no records.
SignatureEntry dominating_cell(const MobilityHistory& h, WindowIndex w_begin, WindowIndex w_end,
                               int level);

int signature_length(WindowIndex total_windows, int step);

Signature build_signature(const MobilityHistory& h, const LshParams& params,
                          WindowIndex total_windows);

std::vector<Signature> build_signatures(std::span<const MobilityHistory* const> histories,
                                        const LshParams& params, WindowIndex total_windows);

/// Fraction of positions holding the same cell; placeholders never match.
double signature_similarity(const Signature& a, const Signature& b);

std::uint64_t band_hash(int band, std::span<const SignatureEntry> rows, std::uint64_t seed);

/// Index pair into the two signature lists.
struct CandidatePair {
    std::size_t e = 0;
    std::size_t i = 0;

    friend auto operator<=>(const CandidatePair&, const CandidatePair&) = default;
};

struct BucketStats {
    /// occupancy[k] = number of (band, bucket) slots holding k signatures, k >= 1.
    std::map<std::size_t, std::size_t> occupancy;
};

/**
 * Pairs (one signature from each side) that land in the same bucket of at
 * least one band. Bands containing a placeholder are not hashed; trailing
 * entries beyond bands * rows are ignored. Result is sorted and unique.
 */
std::vector<CandidatePair> candidate_pairs(std::span<const Signature> sigs_e,
                                           std::span<const Signature> sigs_i,
                                           const BandingPlan& plan, std::size_t n_buckets,
                                           std::uint64_t seed = kDefaultBandSeed,
                                           BucketStats* stats = nullptr);

}  // namespace stlink
