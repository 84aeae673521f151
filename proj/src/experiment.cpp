#include "collapse_lab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "collapse_lab/config.hpp"
#include "collapse_lab/csv.hpp"
#include "collapse_lab/errors.hpp"
#include "collapse_lab/evaluation.hpp"
#include "collapse_lab/io.hpp"
#include "collapse_lab/judge.hpp"
#include "collapse_lab/toy_model.hpp"

#ifndef COLLAPSE_LAB_VERSION
#define COLLAPSE_LAB_VERSION "unknown"
#endif

namespace clab {

using nlohmann::json;
namespace fs = std::filesystem;

ExperimentKind parse_experiment_kind(const std::string& s) {
    if (s == "toy") return ExperimentKind::toy;
    if (s == "chain") return ExperimentKind::chain;
    if (s == "cluster-regression") return ExperimentKind::cluster_regression;
    if (s == "mixed-domain") return ExperimentKind::mixed_domain;
    if (s == "lean") return ExperimentKind::lean;
    throw InvalidConfig("unknown experiment kind '" + s + "'");
}

std::string to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::toy: return "toy";
    case ExperimentKind::chain: return "chain";
    case ExperimentKind::cluster_regression: return "cluster-regression";
    case ExperimentKind::mixed_domain: return "mixed-domain";
    case ExperimentKind::lean: return "lean";
    }
    return "?";
}

PlotKind parse_plot_kind(const std::string& s) {
    if (s == "evolution") return PlotKind::evolution;
    if (s == "interaction-absolute") return PlotKind::interaction_absolute;
    if (s == "interaction-relative") return PlotKind::interaction_relative;
    if (s == "lean-evolution") return PlotKind::lean_evolution;
    if (s == "lean-in-out") return PlotKind::lean_in_out;
    if (s == "lean-stacked") return PlotKind::lean_stacked;
    throw InvalidConfig("unknown figure kind '" + s + "'");
}

std::string to_string(PlotKind k) {
    switch (k) {
    case PlotKind::evolution: return "evolution";
    case PlotKind::interaction_absolute: return "interaction-absolute";
    case PlotKind::interaction_relative: return "interaction-relative";
    case PlotKind::lean_evolution: return "lean-evolution";
    case PlotKind::lean_in_out: return "lean-in-out";
    case PlotKind::lean_stacked: return "lean-stacked";
    }
    return "?";
}

// Spec ----------------------------------------------------------------------------

ExperimentSpec ExperimentSpec::from_json(const json& j, const std::string& source_path) {
    if (!j.is_object()) throw InvalidConfig("experiment spec must be a JSON object");
    static const std::set<std::string> known = {"kind", "ratios", "seeds", "out", "corpus", "embeddings", "projection",
                                                "clusters", "toy", "chain", "generators", "evaluation", "annotator",
                                                "judge", "regression", "lean", "mixed", "properties", "name"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw InvalidConfig("experiment spec: unknown key '" + k + "'");
    if (!j.contains("kind")) throw InvalidConfig("experiment spec: missing \"kind\"");

    ExperimentSpec s;
    s.raw = j;
    s.source_path = source_path;
    s.kind = parse_experiment_kind(j["kind"].get<std::string>());
    if (j.contains("out")) s.out_dir = config::resolve_path(source_path, j["out"].get<std::string>());

    // Sub-configs parse eagerly so errors surface before execution.
    if (s.kind == ExperimentKind::toy) {
        const auto toy = config::toy_config(j.value("toy", json::object()));
        toy.validate();
        s.ratios = {toy.ratio};
        s.seeds = {toy.seed};
    } else {
        auto chain = config::chain_config(j.value("chain", json::object()));
        s.ratios = {chain.ratio};
        chain.validate();
        config::generator_specs(j.value("generators", json()));
        config::evaluation_options(j.value("evaluation", json()));
        if (j.contains("judge")) config::judge_config(j["judge"]).validate();
        if (!j.contains("corpus")) throw InvalidConfig("experiment spec: missing \"corpus\"");
        if ((s.kind == ExperimentKind::cluster_regression || s.kind == ExperimentKind::mixed_domain) && !j.contains("clusters"))
            throw InvalidConfig("experiment spec: missing \"clusters\" manifest");
    }
    if (j.contains("ratios")) s.ratios = j["ratios"].get<std::vector<double>>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (s.ratios.empty()) throw InvalidConfig("experiment spec: empty ratio list");
    if (s.seeds.empty()) throw InvalidConfig("experiment spec: empty seed list");
    for (double r : s.ratios)
        if (!(r >= 0.0 && r <= 1.0)) throw InvalidConfig("experiment spec: ratio " + csv::format_double(r) + " outside [0,1]");
    for (const char* key : {"corpus", "embeddings", "projection", "clusters"})
        if (j.contains(key)) {
            const auto p = s.path(key);
            if (!fs::exists(p)) throw InvalidConfig("experiment spec: " + std::string(key) + " file not found: " + p);
        }
    if (j.contains("annotator")) {
        const auto a = j["annotator"].get<std::string>();
        if (a != "corpus" && a != "judge" && a != "none") throw InvalidConfig("annotator must be corpus, judge or none");
        if (a == "judge" && !j.contains("judge")) throw InvalidConfig("annotator \"judge\" needs a \"judge\" section");
    }
    return s;
}

ExperimentSpec ExperimentSpec::load(const std::string& path) { return from_json(config::load(path), path); }

std::string ExperimentSpec::path(const std::string& key) const {
    if (!raw.contains(key) || !raw[key].is_string()) throw InvalidConfig("experiment spec: missing path \"" + key + "\"");
    return config::resolve_path(source_path, raw[key].get<std::string>());
}

std::string ExperimentSpec::hash() const {
    json canon = raw;
    canon.erase("out"); // where results go does not change what they are
    return config::spec_hash(canon);
}

// Helpers ------------------------------------------------------------------------------

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void run_cells(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    std::mutex failed_mu;
    std::exception_ptr failed;
    auto worker = [&] {
        try {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
        } catch (...) {
            next = n;
            std::lock_guard lock(failed_mu);
            if (!failed) failed = std::current_exception();
        }
    };
    const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
    if (width > 0) worker();
    for (auto& t : pool) t.join();
    if (failed) std::rethrow_exception(failed);
}

std::string ratio_tag(double r) { return csv::format_double(r); }

std::string describe(const std::exception& e) { return e.what(); }

// Everything a chain cell needs besides its corpus.
struct ChainContext {
    ChainConfig base;
    GeneratorFactory factory;
    EvaluationOptions eval;
    std::shared_ptr<EmbeddingLookup> lookup;
    Annotator annotator;
};

Annotator judge_annotator(const JudgeConfig& jc) {
    return [jc](std::vector<TextRecord>& batch) {
        const auto texts = texts_of(batch);
        apply_annotations(batch, JudgeKind::quality, annotate_quality(texts, jc));
        apply_annotations(batch, JudgeKind::lean, annotate_lean(texts, jc));
    };
}

ChainContext make_chain_context(const ExperimentSpec& spec, const std::vector<TextRecord>& corpus,
                                const metrics::EmbeddingMatrix* embeddings) {
    ChainContext ctx;
    ctx.base = config::chain_config(spec.raw.value("chain", json::object()));
    ctx.factory = make_generator_factory(config::generator_specs(spec.raw.value("generators", json())));
    ctx.eval = config::evaluation_options(spec.raw.value("evaluation", json()));
    if (embeddings) {
        ctx.lookup = std::make_shared<EmbeddingLookup>(corpus, *embeddings);
        ctx.eval.embeddings = ctx.lookup.get();
    }
    const std::string ann = spec.raw.value("annotator", std::string("corpus"));
    if (ann == "corpus") ctx.annotator = corpus_lookup_annotator(corpus);
    else if (ann == "judge") ctx.annotator = judge_annotator(config::judge_config(spec.raw["judge"]));
    return ctx;
}

ChainTrace run_chain_cell(const ChainContext& ctx, double ratio, std::uint64_t seed, std::vector<TextRecord> corpus,
                          std::optional<std::vector<std::string>> domains = std::nullopt) {
    ChainConfig cfg = ctx.base;
    cfg.ratio = ratio;
    cfg.seed = seed;
    if (domains) cfg.domains = *domains;
    ChainOptions opts;
    EvaluationOptions eval = ctx.eval;
    eval.seed = derive_seed(seed, 5);
    opts.evaluator = make_evaluator(eval);
    opts.annotator = ctx.annotator;
    opts.keep_evaluated = false;
    return run_chain(cfg, std::move(corpus), ctx.factory, opts);
}

std::optional<metrics::EmbeddingMatrix> load_optional_embeddings(const ExperimentSpec& spec, const char* key,
                                                                 std::size_t corpus_size) {
    if (!spec.raw.contains(key)) return std::nullopt;
    auto m = io::read_embeddings(spec.path(key));
    if (static_cast<std::size_t>(m.rows()) < corpus_size)
        throw InvalidInput(std::string(key) + " has " + std::to_string(m.rows()) + " rows for a corpus of " +
                           std::to_string(corpus_size) + " records");
    return m;
}

std::vector<TextRecord> with_embedding_ids(std::vector<TextRecord> corpus) {
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (!corpus[i].embedding_id) corpus[i].embedding_id = i;
    return corpus;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i]) >= m.rows()) throw InvalidInput("row index " + std::to_string(rows[i]) + " out of range");
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

// Artifact writers shared by the chain-based kinds.
struct ChainCellResult {
    std::string dataset;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::optional<ChainTrace> trace;
    std::string error;
};

struct Artifacts {
    std::string out_dir;
    std::vector<std::string> files;

    void write(const std::string& rel, const std::string& content) {
        io::write_text_file((fs::path(out_dir) / rel).string(), content);
        files.push_back(rel);
    }
};

std::string relative_value(const std::optional<double>& v) { return v ? csv::format_double(*v) : "undefined"; }

void write_chain_artifacts(Artifacts& art, std::vector<SummaryRef>& summaries, const std::vector<ChainCellResult>& cells) {
    std::map<std::pair<std::string, double>, std::ostringstream> summary;
    std::vector<std::pair<std::string, double>> order;
    std::ostringstream rel;
    csv::Writer rw(rel);
    rw.row({"dataset", "ratio", "seed", "domain", "metric", "value"});
    for (const auto& c : cells) {
        if (!c.trace) continue;
        std::ostringstream tr;
        io::write_trace_jsonl(tr, *c.trace);
        art.write("traces/" + c.dataset + "_r" + ratio_tag(c.ratio) + "_s" + std::to_string(c.seed) + ".jsonl", tr.str());
        const auto key = std::make_pair(c.dataset, c.ratio);
        auto [it, fresh] = summary.try_emplace(key);
        if (fresh) order.push_back(key);
        io::write_summary_csv(it->second, *c.trace, fresh);
        for (const auto& dom : c.trace->config.domains) {
            try {
                for (const auto& [m, v] : relative_metrics(*c.trace, dom))
                    rw.row({c.dataset, csv::format_double(c.ratio), std::to_string(c.seed), dom, m, relative_value(v)});
            } catch (const InvalidTrace&) {
                // r = 0 or a single generation: nothing relative to report
            }
        }
    }
    for (const auto& key : order) {
        const std::string file = "summaries/" + key.first + "_r" + ratio_tag(key.second) + ".csv";
        art.write(file, summary[key].str());
        summaries.push_back({file, key.first, key.second});
    }
    art.write("relative.csv", rel.str());
}

std::optional<double> final_relative(const ChainTrace& t, const std::string& domain, const std::string& metric) {
    const auto rel = relative_metrics(t, domain);
    auto it = rel.find(metric);
    if (it == rel.end()) return std::nullopt;
    return it->second;
}

std::string default_diversity_metric(bool have_embeddings) { return have_embeddings ? "cosine_diversity" : "word_entropy"; }

struct RegressionSettings {
    std::vector<regression::Grouping> groupings;
    bool standardized = true;
    std::string diversity_metric;
    std::string quality_metric = "quality";
};

RegressionSettings regression_settings(const json& j, bool have_embeddings, regression::Grouping fallback) {
    RegressionSettings s;
    s.diversity_metric = default_diversity_metric(have_embeddings);
    s.groupings = {fallback};
    if (j.is_null()) return s;
    for (const auto& [k, v] : j.items())
        if (k != "groupings" && k != "standardized" && k != "diversity_metric" && k != "quality_metric")
            throw InvalidConfig("regression: unknown key '" + k + "'");
    if (j.contains("groupings")) {
        s.groupings.clear();
        for (const auto& g : j["groupings"]) s.groupings.push_back(regression::parse_grouping(g.get<std::string>()));
    }
    s.standardized = j.value("standardized", true);
    s.diversity_metric = j.value("diversity_metric", s.diversity_metric);
    s.quality_metric = j.value("quality_metric", s.quality_metric);
    return s;
}

void write_regressions(Artifacts& art, const std::vector<regression::Observation>& obs, const RegressionSettings& rs) {
    std::vector<regression::GroupRegression> all;
    for (auto g : rs.groupings) {
        auto part = regression::property_shift_regression(obs, g, rs.standardized);
        all.insert(all.end(), part.begin(), part.end());
    }
    std::ostringstream out;
    io::write_regression_csv(out, all);
    art.write("regression_results.csv", out.str());
    art.write("regression_table.txt", regression::render_table(all));
}

} // namespace

// Data properties -----------------------------------------------------------------------

std::vector<double> data_properties(const std::vector<TextRecord>& records, const PropertyInputs& in) {
    if (records.size() < 2) throw InvalidInput("data properties need at least 2 records");
    Rng rng(derive_seed(in.seed, 6));
    auto sample = sample_without_replacement(records.size(), std::min(in.sample_cap, records.size()), rng);
    std::sort(sample.begin(), sample.end());
    const auto texts = texts_of(records);

    double semantic = std::numeric_limits<double>::quiet_NaN();
    double gauss = std::numeric_limits<double>::quiet_NaN();
    if (in.embeddings) {
        if (in.embeddings->rows() != static_cast<Eigen::Index>(records.size()))
            throw InvalidInput("embedding rows do not align with records");
        semantic = metrics::cosine_diversity(gather_rows(in.embeddings->values, sample));
    }
    if (in.projection) {
        if (in.projection->rows() != static_cast<Eigen::Index>(records.size()))
            throw InvalidInput("projection rows do not align with records");
        metrics::Projection2D p = gather_rows(*in.projection, sample);
        gauss = metrics::gaussianity_aic(p).aic;
    } else if (in.embeddings) {
        gauss = metrics::gaussianity_aic(metrics::pca_2d(gather_rows(in.embeddings->values, sample))).aic;
    }
    if (std::isnan(semantic)) throw InvalidInput("property semantic_diversity needs embeddings");
    if (std::isnan(gauss)) throw InvalidInput("property gaussianity needs a projection or embeddings");

    const auto quality = metrics::aggregate_scores(records, metrics::ScoreKey::quality);
    const auto positivity = metrics::aggregate_scores(records, metrics::ScoreKey::positivity);
    if (!quality.mean) throw InvalidInput("property quality: no quality annotations");
    if (!positivity.mean) throw InvalidInput("property positivity: no positivity annotations");

    const double lexical = metrics::self_bleu(texts, 4, metrics::BleuSmoothing::add_one, 250, derive_seed(in.seed, 7)).value;
    return {semantic, lexical, gauss, *quality.mean, *positivity.mean, metrics::avg_text_length(texts)};
}

// ResultStore -----------------------------------------------------------------------------

ResultStore ResultStore::open(const std::string& out_dir) {
    const auto path = (fs::path(out_dir) / "manifest.json").string();
    json m;
    try {
        m = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
    ResultStore s;
    s.out_dir = out_dir;
    s.spec_hash = m.at("spec_hash").get<std::string>();
    s.kind = parse_experiment_kind(m.at("kind").get<std::string>());
    s.cells = m.at("cells").get<std::size_t>();
    for (const auto& f : m.at("failures")) s.failures.push_back({f.at("cell"), f.at("error")});
    s.artifacts = m.at("artifacts").get<std::vector<std::string>>();
    for (const auto& r : m.value("summaries", json::array()))
        s.summaries.push_back({r.at("file"), r.at("dataset"), r.at("ratio").get<double>()});
    return s;
}

namespace {

void write_manifest(const ExperimentSpec& spec, const ResultStore& store) {
    json failures = json::array();
    for (const auto& f : store.failures) failures.push_back({{"cell", f.cell}, {"error", f.error}});
    json summaries = json::array();
    for (const auto& s : store.summaries) summaries.push_back({{"file", s.file}, {"dataset", s.dataset}, {"ratio", s.ratio}});
    json m = {{"spec_hash", store.spec_hash},
              {"code_version", COLLAPSE_LAB_VERSION},
              {"kind", to_string(store.kind)},
              {"created", utc_now()},
              {"spec", spec.raw},
              {"cells", store.cells},
              {"failures", failures},
              {"artifacts", store.artifacts},
              {"summaries", summaries}};
    io::write_text_file((fs::path(store.out_dir) / "manifest.json").string(), m.dump(2) + "\n");
}

// toy ---------------------------------------------------------------------------------------

void run_toy(const ExperimentSpec& spec, int jobs, ResultStore& store, Artifacts& art) {
    const auto base = config::toy_config(spec.raw.value("toy", json::object()));
    struct Cell {
        double ratio;
        std::uint64_t seed;
        std::optional<toy::ToyTrace> trace;
        std::string error;
    };
    std::vector<Cell> cells;
    for (auto seed : spec.seeds)
        for (double r : spec.ratios) cells.push_back({r, seed, std::nullopt, {}});
    run_cells(cells.size(), jobs, [&](std::size_t i) {
        auto cfg = base;
        cfg.ratio = cells[i].ratio;
        cfg.seed = cells[i].seed;
        try {
            cells[i].trace = toy::run_toy_chain(cfg);
        } catch (const std::exception& e) {
            cells[i].error = describe(e);
        }
    });
    store.cells = cells.size();
    for (auto seed : spec.seeds) {
        std::vector<toy::ToyTrace> traces;
        for (auto& c : cells) {
            if (c.seed != seed) continue;
            if (c.trace) traces.push_back(*c.trace);
            else store.failures.push_back({"r=" + ratio_tag(c.ratio) + " seed=" + std::to_string(seed), c.error});
        }
        std::ostringstream runs, agg;
        io::write_toy_runs_csv(runs, traces);
        io::write_toy_aggregate_csv(agg, traces);
        art.write("toy_runs_s" + std::to_string(seed) + ".csv", runs.str());
        art.write("toy_aggregate_s" + std::to_string(seed) + ".csv", agg.str());
    }
}

// chain -------------------------------------------------------------------------------------

void run_plain_chain(const ExperimentSpec& spec, int jobs, ResultStore& store, Artifacts& art) {
    const auto corpus = with_embedding_ids(io::read_records_jsonl(spec.path("corpus")));
    const auto emb = load_optional_embeddings(spec, "embeddings", corpus.size());
    const auto ctx = make_chain_context(spec, corpus, emb ? &*emb : nullptr);
    const std::string dataset = spec.raw.value("name", std::string("main"));

    std::vector<ChainCellResult> cells;
    for (double r : spec.ratios)
        for (auto seed : spec.seeds) cells.push_back({dataset, r, seed, std::nullopt, {}});
    run_cells(cells.size(), jobs, [&](std::size_t i) {
        try {
            cells[i].trace = run_chain_cell(ctx, cells[i].ratio, cells[i].seed, corpus);
        } catch (const std::exception& e) {
            cells[i].error = describe(e);
        }
    });
    store.cells = cells.size();
    for (const auto& c : cells)
        if (!c.trace) store.failures.push_back({c.dataset + " r=" + ratio_tag(c.ratio) + " seed=" + std::to_string(c.seed), c.error});
    write_chain_artifacts(art, store.summaries, cells);
}

// cluster-regression -------------------------------------------------------------------------

struct ClusterData {
    std::vector<clustering::ClusterSpec> clusters;
    std::vector<TextRecord> corpus;
    std::optional<metrics::EmbeddingMatrix> embeddings;
    std::optional<metrics::EmbeddingMatrix> projection;
};

ClusterData load_cluster_data(const ExperimentSpec& spec) {
    ClusterData d;
    d.corpus = with_embedding_ids(io::read_records_jsonl(spec.path("corpus")));
    d.clusters = io::read_cluster_manifest(spec.path("clusters"));
    d.embeddings = load_optional_embeddings(spec, "embeddings", d.corpus.size());
    d.projection = load_optional_embeddings(spec, "projection", d.corpus.size());
    if (d.projection && d.projection->cols() != 2) throw InvalidInput("projection must have 2 columns");
    for (const auto& c : d.clusters)
        for (auto i : c.record_indices)
            if (i >= d.corpus.size())
                throw InvalidInput("cluster " + std::to_string(c.cluster_id) + " refers to record " + std::to_string(i) +
                                   " beyond the corpus");
    return d;
}

std::vector<TextRecord> cluster_records(const ClusterData& d, const clustering::ClusterSpec& c) {
    std::vector<TextRecord> out;
    out.reserve(c.record_indices.size());
    for (auto i : c.record_indices) out.push_back(d.corpus[i]);
    return out;
}

std::vector<double> cluster_properties(const ClusterData& d, const clustering::ClusterSpec& c, const json& props_cfg) {
    PropertyInputs in;
    in.sample_cap = props_cfg.value("sample_cap", std::size_t{2000});
    in.seed = derive_seed(props_cfg.value("seed", std::uint64_t{0}), c.cluster_id);
    std::optional<metrics::EmbeddingMatrix> e;
    std::optional<metrics::Projection2D> p;
    if (d.embeddings) {
        e.emplace();
        e->values = gather_rows(d.embeddings->values, c.record_indices);
        in.embeddings = &*e;
    }
    if (d.projection) {
        p = gather_rows(d.projection->values, c.record_indices);
        in.projection = &*p;
    }
    return data_properties(cluster_records(d, c), in);
}

void run_cluster_regression(const ExperimentSpec& spec, int jobs, ResultStore& store, Artifacts& art) {
    const auto data = load_cluster_data(spec);
    const auto ctx = make_chain_context(spec, data.corpus, data.embeddings ? &*data.embeddings : nullptr);
    const auto rs = regression_settings(spec.raw.value("regression", json()), data.embeddings.has_value(),
                                        regression::Grouping::all);
    const json props_cfg = spec.raw.value("properties", json::object());

    // Properties first (one per cluster), then the chain grid.
    std::vector<std::optional<std::vector<double>>> props(data.clusters.size());
    std::vector<std::string> prop_errors(data.clusters.size());
    run_cells(data.clusters.size(), jobs, [&](std::size_t i) {
        try {
            props[i] = cluster_properties(data, data.clusters[i], props_cfg);
        } catch (const std::exception& e) {
            prop_errors[i] = describe(e);
        }
    });

    std::vector<ChainCellResult> cells;
    std::vector<std::size_t> cell_cluster;
    for (std::size_t ci = 0; ci < data.clusters.size(); ++ci)
        for (double r : spec.ratios)
            for (auto seed : spec.seeds) {
                cells.push_back({"cluster" + std::to_string(data.clusters[ci].cluster_id), r, seed, std::nullopt, {}});
                cell_cluster.push_back(ci);
            }
    run_cells(cells.size(), jobs, [&](std::size_t i) {
        const std::size_t ci = cell_cluster[i];
        if (!props[ci]) {
            cells[i].error = "properties unavailable: " + prop_errors[ci];
            return;
        }
        try {
            const auto seed = derive_seed(cells[i].seed, data.clusters[ci].cluster_id);
            cells[i].trace = run_chain_cell(ctx, cells[i].ratio, seed, cluster_records(data, data.clusters[ci]));
            cells[i].trace->config.seed = cells[i].seed; // report the spec seed, not the derived one
        } catch (const std::exception& e) {
            cells[i].error = describe(e);
        }
    });
    store.cells = cells.size();

    std::vector<regression::Observation> obs;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        const std::string label = c.dataset + " r=" + ratio_tag(c.ratio) + " seed=" + std::to_string(c.seed);
        if (!c.trace) {
            store.failures.push_back({label, c.error});
            continue;
        }
        try {
            const auto dom = c.trace->config.domains.front();
            const auto rd = final_relative(*c.trace, dom, rs.diversity_metric);
            const auto rq = final_relative(*c.trace, dom, rs.quality_metric);
            if (!rd || !rq) throw InvalidTrace("relative " + (rd ? rs.quality_metric : rs.diversity_metric) + " undefined");
            const auto& cl = data.clusters[cell_cluster[i]];
            obs.push_back({std::to_string(cl.cluster_id), "all", c.ratio, *props[cell_cluster[i]], *rd, *rq});
        } catch (const std::exception& e) {
            store.failures.push_back({label, describe(e)});
        }
    }
    write_chain_artifacts(art, store.summaries, cells);
    io::write_observations_csv((fs::path(art.out_dir) / "observations.csv").string(), obs);
    art.files.push_back("observations.csv");
    if (!obs.empty()) write_regressions(art, obs, rs);
}

// mixed-domain --------------------------------------------------------------------------------

std::string majority_domain(const ClusterData& d, const clustering::ClusterSpec& c) {
    std::map<std::string, std::size_t> counts;
    for (auto i : c.record_indices) {
        if (!d.corpus[i].domain) throw InvalidInput("mixed-domain: record " + std::to_string(i) + " has no domain tag");
        ++counts[*d.corpus[i].domain];
    }
    if (counts.size() != 1)
        throw InvalidInput("mixed-domain: cluster " + std::to_string(c.cluster_id) + " mixes domains; pure clusters expected");
    return counts.begin()->first;
}

void run_mixed_domain(const ExperimentSpec& spec, int jobs, ResultStore& store, Artifacts& art) {
    const auto data = load_cluster_data(spec);
    const auto ctx = make_chain_context(spec, data.corpus, data.embeddings ? &*data.embeddings : nullptr);
    const auto rs = regression_settings(spec.raw.value("regression", json()), data.embeddings.has_value(),
                                        regression::Grouping::cross_domain_18);
    const json props_cfg = spec.raw.value("properties", json::object());

    std::map<std::size_t, std::size_t> by_id;
    std::map<std::string, std::vector<std::size_t>> per_domain;
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        by_id[data.clusters[i].cluster_id] = i;
        per_domain[majority_domain(data, data.clusters[i])].push_back(i);
    }
    if (per_domain.size() < 2) throw InvalidInput("mixed-domain: manifest covers fewer than two domains");

    // Each group is one pure cluster per domain.
    std::vector<std::vector<std::size_t>> groups;
    const json mixed = spec.raw.value("mixed", json::object());
    if (mixed.contains("groups")) {
        for (const auto& g : mixed["groups"]) {
            std::vector<std::size_t> grp;
            for (const auto& id : g) {
                auto it = by_id.find(id.get<std::size_t>());
                if (it == by_id.end()) throw InvalidConfig("mixed.groups names unknown cluster " + id.dump());
                grp.push_back(it->second);
            }
            groups.push_back(grp);
        }
    } else {
        std::size_t n = SIZE_MAX;
        for (const auto& [dom, list] : per_domain) n = std::min(n, list.size());
        for (std::size_t g = 0; g < n; ++g) {
            std::vector<std::size_t> grp;
            for (const auto& [dom, list] : per_domain) grp.push_back(list[g]);
            groups.push_back(grp);
        }
    }

    std::vector<std::optional<std::vector<double>>> props(data.clusters.size());
    std::vector<std::string> prop_errors(data.clusters.size());
    run_cells(data.clusters.size(), jobs, [&](std::size_t i) {
        try {
            props[i] = cluster_properties(data, data.clusters[i], props_cfg);
        } catch (const std::exception& e) {
            prop_errors[i] = describe(e);
        }
    });

    struct GroupInput {
        std::vector<TextRecord> records;
        std::vector<std::string> domains;
        std::string error;
    };
    std::vector<GroupInput> inputs(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        try {
            std::vector<std::pair<std::string, std::vector<TextRecord>>> pure;
            for (auto ci : groups[g]) {
                pure.emplace_back(majority_domain(data, data.clusters[ci]), cluster_records(data, data.clusters[ci]));
                inputs[g].domains.push_back(pure.back().first);
            }
            inputs[g].records = build_mixed_cluster(pure);
        } catch (const std::exception& e) {
            inputs[g].error = describe(e);
        }
    }

    std::vector<ChainCellResult> cells;
    std::vector<std::size_t> cell_group;
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (double r : spec.ratios)
            for (auto seed : spec.seeds) {
                cells.push_back({"mixed" + std::to_string(g), r, seed, std::nullopt, {}});
                cell_group.push_back(g);
            }
    run_cells(cells.size(), jobs, [&](std::size_t i) {
        const auto& in = inputs[cell_group[i]];
        if (!in.error.empty()) {
            cells[i].error = in.error;
            return;
        }
        try {
            const auto seed = derive_seed(cells[i].seed, 1000003ULL + cell_group[i]);
            cells[i].trace = run_chain_cell(ctx, cells[i].ratio, seed, in.records, in.domains);
            cells[i].trace->config.seed = cells[i].seed;
        } catch (const std::exception& e) {
            cells[i].error = describe(e);
        }
    });
    store.cells = cells.size();

    std::vector<regression::Observation> obs;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        const std::string label = c.dataset + " r=" + ratio_tag(c.ratio) + " seed=" + std::to_string(c.seed);
        if (!c.trace) {
            store.failures.push_back({label, c.error});
            continue;
        }
        const auto& grp = groups[cell_group[i]];
        for (std::size_t k = 0; k < grp.size(); ++k) {
            const auto& dom = inputs[cell_group[i]].domains[k];
            try {
                if (!props[grp[k]]) throw InvalidInput("properties unavailable: " + prop_errors[grp[k]]);
                const auto rd = final_relative(*c.trace, dom, rs.diversity_metric);
                const auto rq = final_relative(*c.trace, dom, rs.quality_metric);
                if (!rd || !rq) throw InvalidTrace("relative outcome undefined for domain " + dom);
                obs.push_back({c.dataset, dom, c.ratio, *props[grp[k]], *rd, *rq});
            } catch (const std::exception& e) {
                store.failures.push_back({label + " domain=" + dom, describe(e)});
            }
        }
    }
    write_chain_artifacts(art, store.summaries, cells);
    io::write_observations_csv((fs::path(art.out_dir) / "observations.csv").string(), obs);
    art.files.push_back("observations.csv");
    if (!obs.empty()) write_regressions(art, obs, rs);
}

// lean --------------------------------------------------------------------------------------

void run_lean(const ExperimentSpec& spec, int jobs, ResultStore& store, Artifacts& art) {
    auto corpus = with_embedding_ids(io::read_records_jsonl(spec.path("corpus")));
    const json lean_cfg = spec.raw.value("lean", json::object());
    for (const auto& [k, v] : lean_cfg.items())
        if (k != "fractions" && k != "size" && k != "annotate") throw InvalidConfig("lean: unknown key '" + k + "'");
    const auto fractions = lean_cfg.value("fractions", std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    const auto chain_base = config::chain_config(spec.raw.value("chain", json::object()));
    const std::size_t size = lean_cfg.value("size", chain_base.human_required());

    if (lean_cfg.value("annotate", false)) {
        if (!spec.raw.contains("judge")) throw InvalidConfig("lean.annotate needs a \"judge\" section");
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < corpus.size(); ++i)
            if (!corpus[i].annotations.lean) missing.push_back(i);
        if (!missing.empty()) {
            std::vector<std::string> texts;
            for (auto i : missing) texts.push_back(corpus[i].text);
            const auto out = annotate_lean(texts, config::judge_config(spec.raw["judge"]));
            for (std::size_t k = 0; k < missing.size(); ++k)
                if (out[k].ok()) corpus[missing[k]].annotations.lean = out[k].annotation->score;
        }
    }
    const auto emb = load_optional_embeddings(spec, "embeddings", corpus.size());
    const auto ctx = make_chain_context(spec, corpus, emb ? &*emb : nullptr);
    const auto parts = partition_lean(corpus);

    struct LeanCell {
        ChainCellResult chain;
        double fraction = 0.0;
        std::optional<double> initial_lean;
    };
    std::vector<LeanCell> cells;
    for (double f : fractions)
        for (double r : spec.ratios)
            for (auto seed : spec.seeds) cells.push_back({{"left" + csv::format_double(f), r, seed, std::nullopt, {}}, f, std::nullopt});
    run_cells(cells.size(), jobs, [&](std::size_t i) {
        auto& c = cells[i];
        try {
            const auto fi = static_cast<std::uint64_t>(std::llround(c.fraction * 100));
            auto mixture = build_lean_mixture(parts.left, parts.right, c.fraction, size, derive_seed(c.chain.seed, 8, fi));
            const auto agg = metrics::aggregate_scores(mixture, metrics::ScoreKey::lean);
            c.initial_lean = agg.mean;
            c.chain.trace = run_chain_cell(ctx, c.chain.ratio, c.chain.seed, std::move(mixture));
        } catch (const std::exception& e) {
            c.chain.error = describe(e);
        }
    });
    store.cells = cells.size();
    std::vector<ChainCellResult> chains;
    std::ostringstream init;
    csv::Writer iw(init);
    iw.row({"dataset", "ratio", "seed", "initial_lean"});
    for (auto& c : cells) {
        if (!c.chain.trace)
            store.failures.push_back({c.chain.dataset + " r=" + ratio_tag(c.chain.ratio) + " seed=" + std::to_string(c.chain.seed),
                                      c.chain.error});
        else if (c.initial_lean)
            iw.row({c.chain.dataset, csv::format_double(c.chain.ratio), std::to_string(c.chain.seed), csv::format_double(*c.initial_lean)});
        chains.push_back(std::move(c.chain));
    }
    write_chain_artifacts(art, store.summaries, chains);
    art.write("lean_initial.csv", init.str());
}

} // namespace

ResultStore run_experiment(const ExperimentSpec& spec, int jobs) {
    ResultStore store;
    store.out_dir = spec.out_dir;
    store.spec_hash = spec.hash();
    store.kind = spec.kind;
    io::ensure_directory(spec.out_dir);
    Artifacts art{spec.out_dir, {}};
    switch (spec.kind) {
    case ExperimentKind::toy: run_toy(spec, jobs, store, art); break;
    case ExperimentKind::chain: run_plain_chain(spec, jobs, store, art); break;
    case ExperimentKind::cluster_regression: run_cluster_regression(spec, jobs, store, art); break;
    case ExperimentKind::mixed_domain: run_mixed_domain(spec, jobs, store, art); break;
    case ExperimentKind::lean: run_lean(spec, jobs, store, art); break;
    }
    store.artifacts = art.files;
    write_manifest(spec, store);
    return store;
}

// Plot data ---------------------------------------------------------------------------------

namespace {

struct SummaryRow {
    std::string dataset;
    double ratio;
    std::string seed;
    int generation;
    std::string domain;
    std::string metric;
    double value;
};

std::vector<SummaryRow> load_summaries(const ResultStore& store) {
    if (store.summaries.empty()) throw InvalidInput("result store has no chain summaries");
    std::vector<SummaryRow> rows;
    for (const auto& ref : store.summaries) {
        const auto t = csv::read_file((fs::path(store.out_dir) / ref.file).string());
        const auto cs = t.column("seed"), cg = t.column("generation"), cd = t.column("domain"), cm = t.column("metric"),
                   cv = t.column("value");
        for (const auto& r : t.rows)
            rows.push_back({ref.dataset, ref.ratio, r[cs], std::stoi(r[cg]), r[cd], r[cm], csv::to_double(r[cv], ref.file)});
    }
    return rows;
}

void require_metric(const std::vector<SummaryRow>& rows, const std::string& metric) {
    for (const auto& r : rows)
        if (r.metric == metric) return;
    throw InvalidInput("missing column '" + metric + "' in result store");
}

} // namespace

std::string emit_plot_data(const ResultStore& store, PlotKind kind) {
    const auto rows = load_summaries(store);
    std::ostringstream out;
    csv::Writer w(out);

    using Key = std::tuple<std::string, double, std::string, std::string>; // dataset, ratio, seed, domain
    std::map<Key, int> last_gen;
    for (const auto& r : rows) {
        auto [it, fresh] = last_gen.try_emplace(Key{r.dataset, r.ratio, r.seed, r.domain}, r.generation);
        if (!fresh) it->second = std::max(it->second, r.generation);
    }

    switch (kind) {
    case PlotKind::evolution:
        w.row({"dataset", "domain", "generation", "ratio", "seed", "metric", "value"});
        for (const auto& r : rows)
            w.row({r.dataset, r.domain, std::to_string(r.generation), csv::format_double(r.ratio), r.seed, r.metric,
                   csv::format_double(r.value)});
        break;
    case PlotKind::interaction_absolute:
    case PlotKind::interaction_relative: {
        const bool relative = kind == PlotKind::interaction_relative;
        std::map<std::tuple<std::string, double, std::string, std::string, std::string>, double> first;
        for (const auto& r : rows)
            if (r.generation == 0) first[{r.dataset, r.ratio, r.seed, r.domain, r.metric}] = r.value;
        w.row({"dataset", "domain", "ratio", "seed", "metric", "value"});
        for (const auto& r : rows) {
            if (r.generation != last_gen[Key{r.dataset, r.ratio, r.seed, r.domain}]) continue;
            std::string value = csv::format_double(r.value);
            if (relative) {
                auto it = first.find({r.dataset, r.ratio, r.seed, r.domain, r.metric});
                const bool defined = it != first.end() && it->second != 0.0 && r.generation > 0;
                value = defined ? csv::format_double(r.value / it->second) : "undefined";
            }
            w.row({r.dataset, r.domain, csv::format_double(r.ratio), r.seed, r.metric, value});
        }
        break;
    }
    case PlotKind::lean_evolution:
        require_metric(rows, "lean");
        w.row({"dataset", "domain", "generation", "ratio", "seed", "lean"});
        for (const auto& r : rows)
            if (r.metric == "lean")
                w.row({r.dataset, r.domain, std::to_string(r.generation), csv::format_double(r.ratio), r.seed, csv::format_double(r.value)});
        break;
    case PlotKind::lean_in_out: {
        require_metric(rows, "lean");
        const auto t = csv::read_file((fs::path(store.out_dir) / "lean_initial.csv").string());
        const auto cd = t.column("dataset"), cr = t.column("ratio"), cs = t.column("seed"), ci = t.column("initial_lean");
        w.row({"initial_lean", "final_lean", "seed", "dataset", "ratio"});
        for (const auto& ir : t.rows) {
            const double ratio = csv::to_double(ir[cr], "lean_initial.csv");
            for (const auto& r : rows)
                if (r.metric == "lean" && r.dataset == ir[cd] && r.ratio == ratio && r.seed == ir[cs] &&
                    r.generation == last_gen[Key{r.dataset, r.ratio, r.seed, r.domain}])
                    w.row({ir[ci], csv::format_double(r.value), r.seed, r.dataset, ir[cr]});
        }
        break;
    }
    case PlotKind::lean_stacked: {
        std::vector<std::string> cols;
        for (int b = 0; b < 8; ++b) cols.push_back("lean_bin_" + std::to_string(b));
        cols.push_back("lean_neutral");
        cols.push_back("lean_nonpolitical");
        for (const auto& c : cols) require_metric(rows, c);
        // mean over seeds per (dataset, ratio, domain, generation)
        std::map<std::tuple<std::string, double, std::string, int>, std::map<std::string, std::pair<double, int>>> acc;
        for (const auto& r : rows)
            if (std::find(cols.begin(), cols.end(), r.metric) != cols.end()) {
                auto& cell = acc[{r.dataset, r.ratio, r.domain, r.generation}][r.metric];
                cell.first += r.value;
                ++cell.second;
            }
        std::vector<std::string> header = {"dataset", "domain", "ratio", "generation"};
        header.insert(header.end(), cols.begin(), cols.end());
        w.row(header);
        for (const auto& [key, metrics] : acc) {
            std::vector<std::string> row = {std::get<0>(key), std::get<2>(key), csv::format_double(std::get<1>(key)),
                                            std::to_string(std::get<3>(key))};
            for (const auto& c : cols) {
                auto it = metrics.find(c);
                row.push_back(it == metrics.end() ? "0" : csv::format_double(it->second.first / it->second.second));
            }
            w.row(row);
        }
        break;
    }
    }
    return out.str();
}

} // namespace clab
