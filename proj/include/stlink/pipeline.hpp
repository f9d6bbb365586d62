#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlink/history.hpp"
#include "stlink/linkage.hpp"
#include "stlink/lsh.hpp"
#include "stlink/metrics.hpp"
#include "stlink/sampling.hpp"
#include "stlink/similarity.hpp"
#include "stlink/tuning.hpp"

#include <json.hpp>

namespace stlink {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::filesystem::path path_e;
    std::filesystem::path path_i;
    std::optional<std::filesystem::path> truth_path;
    HistoryConfig history;
    SimilarityParams similarity;
    std::optional<LshParams> lsh;  // absent: score all pairs
    bool tune = false;
    TuningOptions tuning;
    std::size_t min_records = 5;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::size_t hit_k = 40;
    bool write_scores = false;

    void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
/// Overlays the keys present in `j` onto `cfg`.
void merge_json(const nlohmann::json& j, RunConfig& cfg);

struct LinkOutput {
    LinkageResult linkage;
    /// Every scored pair, non-positive scores included (input of hit precision).
    std::vector<WeightedEdge> scores;
    std::uint64_t pair_comparisons = 0;  // bin pairs whose distance was evaluated
    std::uint64_t candidate_pairs = 0;   // entity pairs scored
    std::uint64_t all_pairs = 0;         // |E| x |I| after filtering
    std::size_t entities_e = 0;
    std::size_t entities_i = 0;
    std::size_t dropped_e = 0;  // entities with too few records
    std::size_t dropped_i = 0;
    std::size_t rejected_records = 0;
    std::int64_t epoch_origin = 0;
    WindowIndex total_windows = 0;
    int spatial_level = 0;
    std::optional<TuningResult> tuning;
    std::optional<BandingPlan> plan;
    int signature_length = 0;
    std::optional<BucketStats> buckets;
    double runtime_ms = 0.0;
};

/// Links two in-memory datasets; file paths in `cfg` are ignored.
LinkOutput link_datasets(std::span<const Record> records_e, std::span<const Record> records_i,
                         const RunConfig& cfg);

/// Scores the given (e, i) index pairs of two prepared view lists in parallel.
std::vector<PairScore> score_candidates(std::span<const ScoringView> views_e,
                                        std::span<const ScoringView> views_i,
                                        std::span<const CandidatePair> pairs, double runaway,
                                        unsigned threads);

Metrics metrics_of(const LinkOutput& out, const Truth& truth, std::size_t k);

Truth read_truth(const std::filesystem::path& path);
void write_truth(const std::filesystem::path& path, const Truth& truth);

std::vector<WeightedEdge> read_edges(const std::filesystem::path& path);
void write_edges(const std::filesystem::path& path, std::span<const WeightedEdge> edges);

void write_histogram(const std::filesystem::path& path, std::span<const WeightedEdge> edges,
                     int bins = 40);
void write_tuning_curve(const std::filesystem::path& path, const TuningResult& tuning);
nlohmann::json metrics_json(const Metrics& m);
nlohmann::json gmm_json(const LinkageResult& r);

struct RunArtifacts {
    LinkOutput output;
    std::optional<Metrics> metrics;
    std::vector<std::filesystem::path> files;
};

/// Ingests both files, links them and writes links.csv, gmm.json,
/// histogram.csv, metrics.json, run_meta.json (and tuning_curve.csv,
/// scores.csv when requested) into cfg.output_dir.
RunArtifacts run(const RunConfig& cfg);

}  // namespace stlink
