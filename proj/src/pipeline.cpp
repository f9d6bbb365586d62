#include "stlink/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

#include "stlink/dataset.hpp"
#include "stlink/errors.hpp"

namespace stlink {

namespace {

using Histories = std::map<std::string, MobilityHistory>;

std::string format_score(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        std::string field = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                          : comma - start);
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(0, 1);
        out.push_back(std::move(field));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

Histories coarsen_all(const Histories& hs, int level) {
    Histories out;
    for (const auto& [id, h] : hs) {
        out.emplace(id, h.level() == level ? h : h.coarsened(level));
    }
    return out;
}

std::vector<const MobilityHistory*> pointers(const Histories& hs) {
    std::vector<const MobilityHistory*> out;
    out.reserve(hs.size());
    for (const auto& [id, h] : hs) out.push_back(&h);
    return out;
}

WindowIndex last_window(const Histories& hs) {
    WindowIndex hi = -1;
    for (const auto& [id, h] : hs) {
        if (!h.empty()) hi = std::max(hi, h.leaves().back().window);
    }
    return hi;
}

}  // namespace

void RunConfig::validate() const {
    history.validate();
    similarity.validate();
    if (lsh) lsh->validate();
    if (threads < 1) {
        throw std::invalid_argument("threads must be >= 1");
    }
    if (tune && tuning.levels.size() < 3) {
        throw std::invalid_argument("tuning needs at least 3 candidate levels");
    }
}

void to_json(nlohmann::json& j, const RunConfig& cfg) {
    j = nlohmann::json{
        {"e", cfg.path_e.string()},
        {"i", cfg.path_i.string()},
        {"truth", cfg.truth_path ? nlohmann::json(cfg.truth_path->string()) : nlohmann::json()},
        {"window_width", cfg.history.window_width},
        {"spatial_level", cfg.history.spatial_level},
        {"epoch_origin",
         cfg.history.epoch_origin ? nlohmann::json(*cfg.history.epoch_origin) : nlohmann::json()},
        {"alpha", cfg.similarity.alpha},
        {"b", cfg.similarity.b},
        {"tune", cfg.tune},
        {"tuning_levels", cfg.tuning.levels},
        {"tuning_sample_size", cfg.tuning.sample_size},
        {"min_records", cfg.min_records},
        {"output_dir", cfg.output_dir.string()},
        {"seed", cfg.seed},
        {"threads", cfg.threads},
        {"hit_k", cfg.hit_k},
        {"write_scores", cfg.write_scores},
    };
    if (cfg.lsh) {
        j["lsh"] = {{"t", cfg.lsh->t},
                    {"step", cfg.lsh->step},
                    {"spatial_level", cfg.lsh->spatial_level},
                    {"n_buckets", cfg.lsh->n_buckets},
                    {"seed", cfg.lsh->seed}};
    } else {
        j["lsh"] = nullptr;
    }
}

void merge_json(const nlohmann::json& j, RunConfig& cfg) {
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key) && !j.at(key).is_null()) j.at(key).get_to(dst);
    };
    std::string s;
    if (j.contains("e")) cfg.path_e = j.at("e").get<std::string>();
    if (j.contains("i")) cfg.path_i = j.at("i").get<std::string>();
    if (j.contains("truth")) {
        cfg.truth_path = j.at("truth").is_null()
                             ? std::nullopt
                             : std::optional<std::filesystem::path>(j.at("truth").get<std::string>());
    }
    get("window_width", cfg.history.window_width);
    get("spatial_level", cfg.history.spatial_level);
    if (j.contains("epoch_origin")) {
        cfg.history.epoch_origin = j.at("epoch_origin").is_null()
                                       ? std::nullopt
                                       : std::optional(j.at("epoch_origin").get<std::int64_t>());
    }
    get("alpha", cfg.similarity.alpha);
    get("b", cfg.similarity.b);
    get("tune", cfg.tune);
    get("tuning_levels", cfg.tuning.levels);
    get("tuning_sample_size", cfg.tuning.sample_size);
    get("min_records", cfg.min_records);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    get("seed", cfg.seed);
    get("threads", cfg.threads);
    get("hit_k", cfg.hit_k);
    get("write_scores", cfg.write_scores);
    if (j.contains("lsh")) {
        const auto& l = j.at("lsh");
        if (l.is_null() || (l.is_boolean() && !l.get<bool>())) {
            cfg.lsh.reset();
        } else {
            LshParams p = cfg.lsh.value_or(LshParams{});
            if (l.is_object()) {
                if (l.contains("t")) l.at("t").get_to(p.t);
                if (l.contains("step")) l.at("step").get_to(p.step);
                if (l.contains("spatial_level")) l.at("spatial_level").get_to(p.spatial_level);
                if (l.contains("n_buckets")) l.at("n_buckets").get_to(p.n_buckets);
                if (l.contains("seed")) l.at("seed").get_to(p.seed);
            }
            cfg.lsh = p;
        }
    }
    cfg.tuning.seed = cfg.seed;
}

std::vector<PairScore> score_candidates(std::span<const ScoringView> views_e,
                                        std::span<const ScoringView> views_i,
                                        std::span<const CandidatePair> pairs, double runaway,
                                        unsigned threads) {
    std::vector<PairScore> out(pairs.size());
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t k = lo; k < hi; ++k) {
            out[k] = score_views(views_e[pairs[k].e], views_i[pairs[k].i], runaway);
        }
    };
    if (threads <= 1 || pairs.size() < 1024) {
        work(0, pairs.size());
        return out;
    }
    constexpr std::size_t kChunk = 256;
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t lo = next.fetch_add(kChunk);
                if (lo >= pairs.size()) break;
                work(lo, std::min(pairs.size(), lo + kChunk));
            }
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

LinkOutput link_datasets(std::span<const Record> records_e, std::span<const Record> records_i,
                         const RunConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();
    LinkOutput out;

    const auto kept_e = drop_sparse_entities(records_e, cfg.min_records, &out.dropped_e);
    const auto kept_i = drop_sparse_entities(records_i, cfg.min_records, &out.dropped_i);

    const std::int64_t width = cfg.history.window_width;
    SimilarityParams sim = cfg.similarity;
    sim.window_width = width;

    if (cfg.history.epoch_origin) {
        out.epoch_origin = *cfg.history.epoch_origin;
    } else {
        const auto oe = epoch_origin_of(kept_e, width);
        const auto oi = epoch_origin_of(kept_i, width);
        out.epoch_origin = std::min(oe.value_or(oi.value_or(0)), oi.value_or(oe.value_or(0)));
    }

    // One build at the finest level any view needs; coarser views are re-keyed.
    int top = cfg.history.spatial_level;
    if (cfg.tune) top = std::max(top, *std::max_element(cfg.tuning.levels.begin(),
                                                        cfg.tuning.levels.end()));
    if (cfg.lsh) top = std::max(top, cfg.lsh->spatial_level);
    HistoryConfig hcfg = cfg.history;
    hcfg.epoch_origin = out.epoch_origin;
    hcfg.spatial_level = top;
    HistoryBuild built_e = build_histories(kept_e, hcfg);
    HistoryBuild built_i = build_histories(kept_i, hcfg);
    out.rejected_records = built_e.rejected + built_i.rejected;

    out.spatial_level = cfg.history.spatial_level;
    if (cfg.tune) {
        TuningOptions topts = cfg.tuning;
        topts.similarity = sim;
        out.tuning = tune_spatial_level(built_e.histories, built_i.histories, topts);
        out.spatial_level = out.tuning->level;
    }

    const Histories sim_e = coarsen_all(built_e.histories, out.spatial_level);
    const Histories sim_i = coarsen_all(built_i.histories, out.spatial_level);
    out.entities_e = sim_e.size();
    out.entities_i = sim_i.size();
    out.all_pairs = static_cast<std::uint64_t>(sim_e.size()) * sim_i.size();
    out.total_windows = std::max(last_window(sim_e), last_window(sim_i)) + 1;

    const auto ptr_e = pointers(sim_e);
    const auto ptr_i = pointers(sim_i);
    const DatasetStats stats_e = DatasetStats::from(ptr_e);
    const DatasetStats stats_i = DatasetStats::from(ptr_i);

    std::vector<CandidatePair> pairs;
    if (cfg.lsh) {
        const Histories lsh_e = coarsen_all(built_e.histories, cfg.lsh->spatial_level);
        const Histories lsh_i = coarsen_all(built_i.histories, cfg.lsh->spatial_level);
        const auto sigs_e = build_signatures(pointers(lsh_e), *cfg.lsh, out.total_windows);
        const auto sigs_i = build_signatures(pointers(lsh_i), *cfg.lsh, out.total_windows);
        out.signature_length = signature_length(out.total_windows, cfg.lsh->step);
        if (out.signature_length > 0) {
            out.plan = BandingPlan::for_signature(out.signature_length, cfg.lsh->t);
            out.buckets.emplace();
            pairs = candidate_pairs(sigs_e, sigs_i, *out.plan, cfg.lsh->n_buckets, cfg.lsh->seed,
                                    &*out.buckets);
        }
    } else {
        pairs.reserve(out.all_pairs);
        for (std::size_t a = 0; a < ptr_e.size(); ++a) {
            for (std::size_t b = 0; b < ptr_i.size(); ++b) pairs.push_back({a, b});
        }
    }
    built_e.histories.clear();
    built_i.histories.clear();
    out.candidate_pairs = pairs.size();

    std::vector<ScoringView> views_e;
    std::vector<ScoringView> views_i;
    views_e.reserve(ptr_e.size());
    views_i.reserve(ptr_i.size());
    for (const auto* h : ptr_e) views_e.emplace_back(*h, stats_e, sim.b);
    for (const auto* h : ptr_i) views_i.emplace_back(*h, stats_i, sim.b);

    const auto scored = score_candidates(views_e, views_i, pairs, runaway_km(sim), cfg.threads);
    std::vector<WeightedEdge> edges;
    out.scores.reserve(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        out.pair_comparisons += scored[k].comparisons;
        WeightedEdge e{ptr_e[pairs[k].e]->entity(), ptr_i[pairs[k].i]->entity(), scored[k].score};
        if (e.weight > 0.0) edges.push_back(e);
        out.scores.push_back(std::move(e));
    }
    out.linkage = link(edges);

    out.runtime_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - started)
                         .count();
    return out;
}

Metrics metrics_of(const LinkOutput& out, const Truth& truth, std::size_t k) {
    Metrics m = evaluate(out.linkage, truth, std::span<const WeightedEdge>(out.scores), k);
    m.runtime_ms = out.runtime_ms;
    m.pair_comparisons = out.pair_comparisons;
    m.candidate_pairs = out.candidate_pairs;
    return m;
}

Truth read_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    Truth truth;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (first) {
            first = false;
            if (f.size() == 2 && f[0] == "e" && f[1] == "i") continue;
        }
        if (f.size() != 2 || f[0].empty() || f[1].empty()) {
            throw FormatError("truth lines must be `e,i`: " + line);
        }
        truth[f[0]] = f[1];
    }
    return truth;
}

void write_truth(const std::filesystem::path& path, const Truth& truth) {
    auto out = open_out(path);
    out << "e,i\n";
    for (const auto& [e, i] : truth) out << e << ',' << i << '\n';
}

std::vector<WeightedEdge> read_edges(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<WeightedEdge> edges;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (first) {
            first = false;
            if (f.size() == 3 && f[0] == "u") continue;
        }
        if (f.size() != 3) throw FormatError("edge lines must be `u,v,score`: " + line);
        try {
            edges.push_back({f[0], f[1], std::stod(f[2])});
        } catch (const std::exception&) {
            throw FormatError("bad score in line: " + line);
        }
    }
    return edges;
}

void write_edges(const std::filesystem::path& path, std::span<const WeightedEdge> edges) {
    auto out = open_out(path);
    out << "u,v,score\n";
    for (const auto& e : edges) out << e.u << ',' << e.v << ',' << format_score(e.weight) << '\n';
}

void write_histogram(const std::filesystem::path& path, std::span<const WeightedEdge> edges,
                     int bins) {
    auto out = open_out(path);
    out << "bin_lo,bin_hi,count\n";
    if (edges.empty() || bins < 1) return;
    double lo = edges.front().weight;
    double hi = lo;
    for (const auto& e : edges) {
        lo = std::min(lo, e.weight);
        hi = std::max(hi, e.weight);
    }
    if (hi == lo) {
        out << format_score(lo) << ',' << format_score(hi) << ',' << edges.size() << '\n';
        return;
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    const double width = (hi - lo) / bins;
    for (const auto& e : edges) {
        auto k = static_cast<std::size_t>((e.weight - lo) / width);
        ++counts[std::min(k, counts.size() - 1)];
    }
    for (int k = 0; k < bins; ++k) {
        out << format_score(lo + k * width) << ',' << format_score(lo + (k + 1) * width) << ','
            << counts[static_cast<std::size_t>(k)] << '\n';
    }
}

void write_tuning_curve(const std::filesystem::path& path, const TuningResult& tuning) {
    auto out = open_out(path);
    out << "dataset,level,ratio\n";
    auto dump = [&](const char* name, const TuningCurve& c) {
        for (std::size_t k = 0; k < c.levels.size(); ++k) {
            out << name << ',' << c.levels[k] << ',' << format_score(c.ratios[k]) << '\n';
        }
    };
    dump("e", tuning.curve_e);
    dump("i", tuning.curve_i);
}

nlohmann::json metrics_json(const Metrics& m) {
    return {
        {"precision", m.precision},
        {"recall", m.recall},
        {"f1", m.f1},
        {"hit_precision_at_k", m.hit_precision_at_k ? nlohmann::json(*m.hit_precision_at_k)
                                                    : nlohmann::json()},
        {"k", m.k},
        {"tp", m.tp},
        {"fp", m.fp},
        {"fn", m.fn},
        {"pair_comparisons", m.pair_comparisons},
        {"candidate_pairs", m.candidate_pairs},
    };
}

nlohmann::json gmm_json(const LinkageResult& r) {
    nlohmann::json j;
    j["threshold"] = r.threshold;
    j["unfiltered"] = r.unfiltered;
    j["matched"] = r.matched.size();
    j["linked"] = r.linked.size();
    if (!r.note.empty()) j["note"] = r.note;
    if (r.gmm) {
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& c : r.gmm->components) {
            comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"stddev", c.stddev}});
        }
        j["components"] = comps;
        j["log_likelihood"] = r.gmm->log_likelihood;
        j["iterations"] = r.gmm->iterations;
        j["converged"] = r.gmm->converged;
        const Prf prf = expected_prf(*r.gmm, r.threshold);
        j["expected"] = {{"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1}};
    }
    j["em"] = {{"init", "median split of sorted weights, equal mixing weights"},
               {"max_iter", GmmOptions{}.max_iter},
               {"tol", GmmOptions{}.tol},
               {"variance_floor", "1e-6 x sample variance"},
               {"threshold_grid", kThresholdGridPoints}};
    return j;
}

RunArtifacts run(const RunConfig& cfg) {
    cfg.validate();
    const IngestResult in_e = ingest(cfg.path_e);
    const IngestResult in_i = ingest(cfg.path_i);

    RunArtifacts art;
    art.output = link_datasets(in_e.records, in_i.records, cfg);
    const LinkOutput& out = art.output;

    std::filesystem::create_directories(cfg.output_dir);
    auto path = [&](const char* name) {
        art.files.push_back(cfg.output_dir / name);
        return art.files.back();
    };

    write_edges(path("links.csv"), out.linkage.linked);
    write_histogram(path("histogram.csv"), out.linkage.matched);
    write_json(path("gmm.json"), gmm_json(out.linkage));
    if (out.tuning) write_tuning_curve(path("tuning_curve.csv"), *out.tuning);
    if (cfg.write_scores) write_edges(path("scores.csv"), out.scores);

    nlohmann::json metrics;
    if (cfg.truth_path) {
        art.metrics = metrics_of(out, read_truth(*cfg.truth_path), cfg.hit_k);
        metrics = metrics_json(*art.metrics);
    } else {
        metrics = {{"precision", nullptr},
                   {"recall", nullptr},
                   {"f1", nullptr},
                   {"hit_precision_at_k", nullptr},
                   {"pair_comparisons", out.pair_comparisons},
                   {"candidate_pairs", out.candidate_pairs}};
    }
    metrics["linked"] = out.linkage.linked.size();
    metrics["matched"] = out.linkage.matched.size();
    metrics["all_pairs"] = out.all_pairs;
    write_json(path("metrics.json"), metrics);

    nlohmann::json meta;
    meta["version"] = kVersion;
    to_json(meta["config"], cfg);
    meta["runtime_ms"] = out.runtime_ms;
    meta["ingest"] = {{"e", {{"lines", in_e.lines}, {"malformed", in_e.malformed}}},
                      {"i", {{"lines", in_i.lines}, {"malformed", in_i.malformed}}}};
    meta["entities"] = {{"e", out.entities_e},
                        {"i", out.entities_i},
                        {"dropped_e", out.dropped_e},
                        {"dropped_i", out.dropped_i}};
    meta["rejected_records"] = out.rejected_records;
    meta["windows"] = {{"epoch_origin", out.epoch_origin},
                       {"alignment", cfg.history.epoch_origin
                                         ? "configured epoch_origin"
                                         : "earliest timestamp of both datasets, floored to "
                                           "window_width"},
                       {"total", out.total_windows}};
    meta["spatial_level"] = out.spatial_level;
    meta["runaway_km"] = runaway_km({cfg.similarity.alpha, cfg.similarity.b,
                                     cfg.history.window_width});
    if (out.tuning) {
        meta["tuning"] = {{"elbow_e", out.tuning->elbow_e},
                          {"elbow_i", out.tuning->elbow_i},
                          {"level", out.tuning->level},
                          {"pivots", "min(sample_size, n) seeded pivots x all other entities"}};
    }
    if (cfg.lsh) {
        nlohmann::json lsh{{"signature_length", out.signature_length},
                           {"hash_seed", cfg.lsh->seed},
                           {"placeholder_bands", "skipped"},
                           {"trailing_rows", "ignored"}};
        if (out.plan) {
            lsh["bands"] = out.plan->bands;
            lsh["rows"] = out.plan->rows;
            lsh["t_eff"] = out.plan->t_eff();
        }
        if (out.buckets) {
            nlohmann::json occ = nlohmann::json::object();
            for (const auto& [size, n] : out.buckets->occupancy) occ[std::to_string(size)] = n;
            lsh["bucket_occupancy"] = occ;
        }
        meta["lsh"] = lsh;
    }
    meta["decisions"] = {
        {"proximity_floor", "log2 argument floored at 2^-20 (min -20 per pair)"},
        {"idf_log", "natural"},
        {"pair_ties", "(min cell id, max cell id, u cell id) ascending"},
        {"mfn_dedup", "pairs already taken by MNN are not re-added"},
        {"threshold", "argmax of expected F1 over a 10001-point grid"},
        {"hit_precision", "max(0, (k - rank) / k), rank 0-based"},
    };
    write_json(path("run_meta.json"), meta);
    return art;
}

}  // namespace stlink
