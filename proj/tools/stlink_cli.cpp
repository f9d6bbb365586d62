#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stlink/dataset.hpp"
#include "stlink/errors.hpp"
#include "stlink/pipeline.hpp"
#include "stlink/sampling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void make_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

// Flags that override RunConfig only when given on the command line, so a
// --config file supplies the rest.
struct RunFlags {
    std::vector<std::function<void(stlink::RunConfig&)>> apply;
    std::string config_file;

    template <class T, class F>
    void add(CLI::App* app, const std::string& name, const std::string& help, F setter) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(name, *value, help);
        apply.push_back([opt, value, setter](stlink::RunConfig& cfg) {
            if (opt->count() > 0) setter(cfg, *value);
        });
    }

    void add_flag(CLI::App* app, const std::string& name, const std::string& help,
                  std::function<void(stlink::RunConfig&)> setter) {
        CLI::Option* opt = app->add_flag(name, help);
        apply.push_back([opt, setter](stlink::RunConfig& cfg) {
            if (opt->count() > 0) setter(cfg);
        });
    }

    stlink::RunConfig resolve() const {
        stlink::RunConfig cfg;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw stlink::IoError("cannot read " + config_file);
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw stlink::FormatError(config_file + ": " + e.what());
            }
            stlink::merge_json(j, cfg);
        }
        for (const auto& f : apply) f(cfg);
        cfg.tuning.seed = cfg.seed;
        return cfg;
    }
};

stlink::LshParams& lsh_of(stlink::RunConfig& cfg) {
    if (!cfg.lsh) cfg.lsh.emplace();
    return *cfg.lsh;
}

void add_run_flags(CLI::App* app, RunFlags& f, bool need_io) {
    app->add_option("--config", f.config_file, "JSON file with RunConfig keys");
    if (need_io) {
        f.add<std::string>(app, "--e", "records of dataset E",
                           [](stlink::RunConfig& c, const std::string& v) { c.path_e = v; });
        f.add<std::string>(app, "--i", "records of dataset I",
                           [](stlink::RunConfig& c, const std::string& v) { c.path_i = v; });
        f.add<std::string>(app, "--truth", "ground truth CSV (e,i) for metrics",
                           [](stlink::RunConfig& c, const std::string& v) { c.truth_path = v; });
    }
    f.add<std::string>(app, "-o,--out", "output directory",
                       [](stlink::RunConfig& c, const std::string& v) { c.output_dir = v; });
    f.add<std::int64_t>(app, "--window", "temporal window width in seconds",
                        [](stlink::RunConfig& c, std::int64_t v) { c.history.window_width = v; });
    f.add<int>(app, "--level", "spatial level for similarity",
               [](stlink::RunConfig& c, int v) { c.history.spatial_level = v; });
    f.add<std::int64_t>(app, "--epoch-origin", "window alignment origin (epoch seconds)",
                        [](stlink::RunConfig& c, std::int64_t v) { c.history.epoch_origin = v; });
    f.add<double>(app, "--alpha", "max speed, km per minute",
                  [](stlink::RunConfig& c, double v) { c.similarity.alpha = v; });
    f.add<double>(app, "--b", "length normalization strength",
                  [](stlink::RunConfig& c, double v) { c.similarity.b = v; });
    f.add_flag(app, "--lsh", "use LSH candidates instead of all pairs",
               [](stlink::RunConfig& c) { lsh_of(c); });
    f.add_flag(app, "--all-pairs", "score all pairs",
               [](stlink::RunConfig& c) { c.lsh.reset(); });
    f.add<double>(app, "--lsh-t", "LSH similarity threshold",
                  [](stlink::RunConfig& c, double v) { lsh_of(c).t = v; });
    f.add<int>(app, "--lsh-step", "windows per signature element",
               [](stlink::RunConfig& c, int v) { lsh_of(c).step = v; });
    f.add<int>(app, "--lsh-level", "spatial level of signature cells",
               [](stlink::RunConfig& c, int v) { lsh_of(c).spatial_level = v; });
    f.add<std::uint64_t>(app, "--lsh-buckets", "buckets per band",
                         [](stlink::RunConfig& c, std::uint64_t v) { lsh_of(c).n_buckets = v; });
    f.add_flag(app, "--tune", "pick the spatial level from the elbow of the tuning curve",
               [](stlink::RunConfig& c) { c.tune = true; });
    f.add<std::vector<int>>(app, "--tune-levels", "candidate levels",
                            [](stlink::RunConfig& c, const std::vector<int>& v) { c.tuning.levels = v; });
    f.add<std::size_t>(app, "--tune-sample", "tuning pivots",
                       [](stlink::RunConfig& c, std::size_t v) { c.tuning.sample_size = v; });
    f.add<std::size_t>(app, "--min-records", "drop entities with this many records or fewer",
                       [](stlink::RunConfig& c, std::size_t v) { c.min_records = v; });
    f.add<std::uint64_t>(app, "--seed", "seed",
                         [](stlink::RunConfig& c, std::uint64_t v) { c.seed = v; });
    f.add<unsigned>(app, "--threads", "scoring threads",
                    [](stlink::RunConfig& c, unsigned v) { c.threads = v; });
    f.add<std::size_t>(app, "--hit-k", "k of hit precision",
                       [](stlink::RunConfig& c, std::size_t v) { c.hit_k = v; });
    f.add_flag(app, "--write-scores", "also write scores.csv with every scored pair",
               [](stlink::RunConfig& c) { c.write_scores = true; });
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

int cmd_gen(const stlink::SyntheticConfig& cfg, const std::string& out) {
    const auto records = stlink::gen_synthetic(cfg);
    make_parent(out);
    stlink::write_records(out, records);
    std::cout << json{{"records", records.size()}, {"entities", cfg.n_entities}, {"output", out}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_sample(const std::string& input, const stlink::SampleConfig& cfg, const fs::path& out) {
    const auto in = stlink::ingest(fs::path(input));
    const auto pair = stlink::sample_pair(in.records, cfg);
    fs::create_directories(out);
    stlink::write_records(out / "e.csv", pair.a);
    stlink::write_records(out / "i.csv", pair.b);
    stlink::write_truth(out / "truth.csv", pair.truth);
    std::cout << json{{"records_e", pair.a.size()},
                      {"records_i", pair.b.size()},
                      {"selected_e", pair.selected_a},
                      {"selected_i", pair.selected_b},
                      {"selected_common", pair.selected_common},
                      {"truth", pair.truth.size()},
                      {"output_dir", out.string()}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_tune(stlink::RunConfig cfg) {
    cfg.tune = true;
    cfg.validate();
    const auto in_e = stlink::ingest(cfg.path_e);
    const auto in_i = stlink::ingest(cfg.path_i);
    const auto kept_e = stlink::drop_sparse_entities(in_e.records, cfg.min_records);
    const auto kept_i = stlink::drop_sparse_entities(in_i.records, cfg.min_records);
    stlink::HistoryConfig h = cfg.history;
    if (!h.epoch_origin) {
        const auto oe = stlink::epoch_origin_of(kept_e, h.window_width);
        const auto oi = stlink::epoch_origin_of(kept_i, h.window_width);
        h.epoch_origin = std::min(oe.value_or(oi.value_or(0)), oi.value_or(oe.value_or(0)));
    }
    h.spatial_level = *std::max_element(cfg.tuning.levels.begin(), cfg.tuning.levels.end());
    const auto he = stlink::build_histories(kept_e, h);
    const auto hi = stlink::build_histories(kept_i, h);
    stlink::TuningOptions opts = cfg.tuning;
    opts.similarity = cfg.similarity;
    opts.similarity.window_width = h.window_width;
    const auto result = stlink::tune_spatial_level(he.histories, hi.histories, opts);
    fs::create_directories(cfg.output_dir);
    stlink::write_tuning_curve(cfg.output_dir / "tuning_curve.csv", result);
    std::cout << json{{"level", result.level},
                      {"elbow_e", result.elbow_e},
                      {"elbow_i", result.elbow_i},
                      {"curve", (cfg.output_dir / "tuning_curve.csv").string()}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_link(const stlink::RunConfig& cfg) {
    const auto art = stlink::run(cfg);
    json j{{"linked", art.output.linkage.linked.size()},
           {"matched", art.output.linkage.matched.size()},
           {"threshold", art.output.linkage.threshold},
           {"candidate_pairs", art.output.candidate_pairs},
           {"all_pairs", art.output.all_pairs},
           {"runtime_ms", art.output.runtime_ms},
           {"output_dir", cfg.output_dir.string()}};
    if (art.metrics) j["metrics"] = stlink::metrics_json(*art.metrics);
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_eval(const std::string& links, const std::string& truth, const std::string& scores,
             std::size_t k) {
    const auto linked = stlink::read_edges(links);
    const auto t = stlink::read_truth(truth);
    stlink::Metrics m;
    if (scores.empty()) {
        m = stlink::evaluate(linked, t, std::nullopt, k);
    } else {
        const auto all = stlink::read_edges(scores);
        m = stlink::evaluate(linked, t, std::span<const stlink::WeightedEdge>(all), k);
    }
    std::cout << stlink::metrics_json(m).dump(2) << '\n';
    return 0;
}

struct BenchOptions {
    std::size_t n = 200;
    std::size_t steps = 1000;
    std::string rhos = "0.5";
    std::string ps = "0.5";
    std::string ts = "0";  // 0 scores all pairs
    std::string levels;    // empty keeps the configured level
    std::string out = "bench.csv";
};

// Cartesian sweep over sampling knobs, LSH thresholds and spatial levels.
int cmd_bench(const BenchOptions& b, stlink::RunConfig base) {
    stlink::SyntheticConfig g;
    g.n_entities = b.n;
    g.steps = b.steps;
    g.seed = base.seed;
    g.alpha = base.similarity.alpha;
    const auto records = stlink::gen_synthetic(g);

    std::vector<double> levels = parse_list(b.levels);
    if (levels.empty()) levels.push_back(base.history.spatial_level);

    make_parent(b.out);
    std::ofstream out(b.out, std::ios::binary);
    if (!out) throw stlink::IoError("cannot write " + b.out);
    out << "rho,p,lsh_t,level,entities_e,entities_i,truth,linked,precision,recall,f1,"
           "hit_precision,unfiltered_precision,candidate_pairs,all_pairs,pair_comparisons,"
           "runtime_ms\n";
    for (double rho : parse_list(b.rhos)) {
        for (double p : parse_list(b.ps)) {
            stlink::SampleConfig sc;
            sc.intersection_ratio = rho;
            sc.inclusion_probability = p;
            sc.seed = base.seed;
            sc.min_records = base.min_records;
            const auto pair = stlink::sample_pair(records, sc);
            for (double t : parse_list(b.ts)) {
                for (double level : levels) {
                    stlink::RunConfig cfg = base;
                    cfg.history.spatial_level = static_cast<int>(level);
                    if (t > 0.0) {
                        lsh_of(cfg).t = t;
                    } else {
                        cfg.lsh.reset();
                    }
                    const auto res = stlink::link_datasets(pair.a, pair.b, cfg);
                    const auto m = stlink::metrics_of(res, pair.truth, cfg.hit_k);
                    const auto unf = stlink::evaluate(res.linkage.matched, pair.truth);
                    out << fmt(rho) << ',' << fmt(p) << ',' << fmt(t) << ','
                        << res.spatial_level << ',' << res.entities_e << ',' << res.entities_i
                        << ',' << pair.truth.size() << ',' << res.linkage.linked.size() << ','
                        << fmt(m.precision) << ',' << fmt(m.recall) << ',' << fmt(m.f1) << ','
                        << fmt(m.hit_precision_at_k.value_or(0.0)) << ','
                        << fmt(unf.precision) << ',' << res.candidate_pairs << ','
                        << res.all_pairs << ',' << res.pair_comparisons << ','
                        << fmt(res.runtime_ms) << '\n';
                    std::cerr << "rho=" << fmt(rho) << " p=" << fmt(p) << " t=" << fmt(t)
                              << " level=" << res.spatial_level << " f1=" << fmt(m.f1) << '\n';
                }
            }
        }
    }
    std::cout << json{{"output", b.out}}.dump() << '\n';
    return 0;
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const stlink::IoError*>(&e)) return "io";
    if (dynamic_cast<const stlink::FormatError*>(&e)) return "format";
    if (dynamic_cast<const stlink::DegenerateInputError*>(&e)) return "degenerate_input";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
    return "runtime";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal entity linkage across two mobility datasets"};
    app.require_subcommand(1);
    app.set_version_flag("--version", stlink::kVersion);

    stlink::SyntheticConfig gen_cfg;
    std::string gen_out = "records.csv";
    std::string gen_model = "hotspot";
    auto* gen = app.add_subcommand("gen", "generate synthetic mobility traces");
    gen->add_option("-n,--entities", gen_cfg.n_entities, "number of entities");
    gen->add_option("--steps", gen_cfg.steps, "records per entity");
    gen->add_option("--step-minutes", gen_cfg.step_minutes, "minutes between records");
    gen->add_option("--alpha", gen_cfg.alpha, "max speed, km per minute");
    gen->add_option("--model", gen_model, "hotspot or walk")
        ->check(CLI::IsMember({"hotspot", "walk"}));
    gen->add_option("--hotspots", gen_cfg.hotspots, "hotspots per entity");
    gen->add_option("--seed", gen_cfg.seed, "seed");
    gen->add_option("-o,--out", gen_out, "output CSV");

    stlink::SampleConfig sample_cfg;
    std::string sample_in;
    std::string sample_out = "sample";
    auto* sample = app.add_subcommand("sample", "split one record file into two linked datasets");
    sample->add_option("input", sample_in, "record CSV")->required();
    sample->add_option("--rho", sample_cfg.intersection_ratio, "entity intersection ratio");
    sample->add_option("--p", sample_cfg.inclusion_probability, "record inclusion probability");
    sample->add_option("--min-records", sample_cfg.min_records, "drop sparse entities");
    sample->add_option("--seed", sample_cfg.seed, "seed");
    sample->add_option("-o,--out", sample_out, "output directory (e.csv, i.csv, truth.csv)");

    RunFlags tune_flags;
    auto* tune = app.add_subcommand("tune", "pick a spatial level from the tuning curves");
    add_run_flags(tune, tune_flags, true);

    RunFlags link_flags;
    auto* linkc = app.add_subcommand("link", "link two record files");
    add_run_flags(linkc, link_flags, true);

    std::string eval_links;
    std::string eval_truth;
    std::string eval_scores;
    std::size_t eval_k = 40;
    auto* eval = app.add_subcommand("eval", "score a links.csv against ground truth");
    eval->add_option("links", eval_links, "links CSV (u,v,score)")->required();
    eval->add_option("truth", eval_truth, "truth CSV (e,i)")->required();
    eval->add_option("--scores", eval_scores, "scores.csv for hit precision");
    eval->add_option("--k", eval_k, "k of hit precision");
    std::uint64_t eval_seed = 1;
    eval->add_option("--seed", eval_seed, "accepted for uniformity; unused");

    BenchOptions bench_opts;
    RunFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "sweep synthetic benchmarks into a CSV table");
    bench->add_option("-n,--entities", bench_opts.n, "synthetic entities");
    bench->add_option("--steps", bench_opts.steps, "records per entity");
    bench->add_option("--rhos", bench_opts.rhos, "comma list of intersection ratios");
    bench->add_option("--ps", bench_opts.ps, "comma list of inclusion probabilities");
    bench->add_option("--lsh-ts", bench_opts.ts, "comma list of LSH thresholds, 0 = all pairs");
    bench->add_option("--levels", bench_opts.levels, "comma list of spatial levels");
    bench->add_option("--table", bench_opts.out, "output CSV");
    add_run_flags(bench, bench_flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            gen_cfg.model = gen_model == "walk" ? stlink::MobilityModel::RandomWalk
                                                : stlink::MobilityModel::Hotspot;
            return cmd_gen(gen_cfg, gen_out);
        }
        if (*sample) return cmd_sample(sample_in, sample_cfg, sample_out);
        if (*tune) return cmd_tune(tune_flags.resolve());
        if (*linkc) return cmd_link(link_flags.resolve());
        if (*eval) return cmd_eval(eval_links, eval_truth, eval_scores, eval_k);
        if (*bench) return cmd_bench(bench_opts, bench_flags.resolve());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
