#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "collapse_lab/config.hpp"
#include "collapse_lab/csv.hpp"
#include "collapse_lab/errors.hpp"
#include "collapse_lab/experiment.hpp"
#include "collapse_lab/io.hpp"
#include "support/temp_dir.hpp"

using namespace clab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* const kWords[] = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"};

std::vector<TextRecord> synthetic_corpus(std::size_t n, std::uint64_t seed, const std::vector<std::string>& domains = {}) {
    Rng rng(seed);
    std::uniform_int_distribution<int> w(0, 9), len(4, 9), q(0, 100), lean(-1, 100);
    std::uniform_real_distribution<double> pos(-1, 1);
    std::vector<TextRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string t;
        for (int k = len(rng); k > 0; --k) t += std::string(kWords[w(rng)]) + " ";
        t += "n" + std::to_string(i);
        TextRecord r = human_record(t);
        r.annotations.quality = q(rng);
        r.annotations.lean = lean(rng);
        r.annotations.positivity = pos(rng);
        if (!domains.empty()) r.domain = domains[i % domains.size()];
        out.push_back(std::move(r));
    }
    return out;
}

std::string write_spec(const testing::TempDir& dir, const std::string& name, const json& j) {
    return dir.write(name, j.dump(2));
}

ResultStore run(const std::string& spec_path, int jobs = 1) { return run_experiment(ExperimentSpec::load(spec_path), jobs); }

json small_chain() { return {{"generations", 4}, {"initial_human", 40}, {"per_gen_total", 40}, {"eval_sample", 20}}; }

} // namespace

TEST_SUITE("experiment") {
    TEST_CASE("toy grid: 6 ratios x 50 runs") {
        testing::TempDir dir("exp_toy");
        const auto spec = write_spec(dir, "toy.json",
                                     {{"kind", "toy"},
                                      {"ratios", {0.0625, 0.125, 0.25, 0.5, 0.75, 0.9375}},
                                      {"seeds", {0}},
                                      {"toy", {{"support_size", 50}, {"steps", 4}, {"runs", 50}}},
                                      {"out", "out"}});
        const auto store = run(spec, 2);
        CHECK(store.cells == 6);
        CHECK(store.failures.empty());
        const auto runs = csv::read_file(dir.file("out/toy_runs_s0.csv"));
        std::set<std::pair<std::string, std::string>> traces;
        for (const auto& r : runs.rows) traces.insert({r[runs.column("r")], r[runs.column("run")]});
        CHECK(traces.size() == 300);
        const auto agg = csv::read_file(dir.file("out/toy_aggregate_s0.csv"));
        CHECK(agg.rows.size() == 6 * 4); // one row per (ratio, step)
    }

    TEST_CASE("chain grid with five seeds, byte-identical rerun") {
        testing::TempDir dir("exp_chain");
        io::write_records_jsonl(dir.file("corpus.jsonl"), synthetic_corpus(400, 1));
        json j = {{"kind", "chain"}, {"corpus", "corpus.jsonl"}, {"ratios", {0.5}}, {"chain", small_chain()}, {"out", "a"}};
        const auto store = run(write_spec(dir, "chain.json", j), 3);
        CHECK(store.cells == 5);
        CHECK(store.failures.empty());
        int traces = 0;
        for (const auto& e : fs::directory_iterator(dir.file("a/traces"))) traces += e.path().extension() == ".jsonl";
        CHECK(traces == 5);
        REQUIRE(store.summaries.size() == 1);
        const auto summary = csv::read_file(dir.file("a/" + store.summaries[0].file));
        CHECK(summary.header == std::vector<std::string>{"seed", "generation", "domain", "metric", "value"});
        std::set<std::string> seeds;
        for (const auto& r : summary.rows) seeds.insert(r[0]);
        CHECK(seeds.size() == 5);

        j["out"] = "b";
        const auto again = run(write_spec(dir, "chain_b.json", j), 1);
        CHECK(again.spec_hash == store.spec_hash);
        for (const auto& f : store.artifacts) CHECK(testing::slurp(dir.file("a/" + f)) == testing::slurp(dir.file("b/" + f)));

        const auto opened = ResultStore::open(dir.file("a"));
        CHECK(opened.spec_hash == store.spec_hash);
        CHECK(opened.artifacts == store.artifacts);
        const auto manifest = json::parse(testing::slurp(dir.file("a/manifest.json")));
        for (const char* key : {"spec_hash", "code_version", "created", "spec", "cells", "failures"}) CHECK(manifest.contains(key));
    }

    TEST_CASE("failing cells are recorded without stopping the grid") {
        testing::TempDir dir("exp_fail");
        // enough human data for r = 1 (40 records) but not for r = 0 (200)
        io::write_records_jsonl(dir.file("corpus.jsonl"), synthetic_corpus(60, 2));
        const auto store = run(write_spec(dir, "chain.json",
                                          {{"kind", "chain"},
                                           {"corpus", "corpus.jsonl"},
                                           {"ratios", {0.0, 1.0}},
                                           {"seeds", {0, 1}},
                                           {"chain", small_chain()},
                                           {"out", "out"}}));
        CHECK(store.cells == 4);
        REQUIRE(store.failures.size() == 2);
        for (const auto& f : store.failures) {
            CHECK(f.cell.find("r=0") != std::string::npos);
            CHECK(f.error.find("exhausted") != std::string::npos);
        }
        CHECK(store.summaries.size() == 1);
    }

    TEST_CASE("spec errors surface before execution") {
        testing::TempDir dir("exp_spec");
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"ratios", {0.5}}}), InvalidConfig);
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "toy"}, {"ratios", {1.5}}}), InvalidConfig);
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "sweep"}}), InvalidConfig);
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "chain"}, {"corpus", "missing.jsonl"}, {"ratios", {0.5}}},
                                                  dir.file("x.json")),
                        InvalidConfig);
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "toy"}, {"ratios", {0.5}}, {"typo", 1}}), InvalidConfig);
        CHECK_THROWS_AS(ExperimentSpec::from_json(json{{"kind", "toy"}, {"ratios", {0.5}}, {"toy", {{"N", 5}}}}), InvalidConfig);
    }

    TEST_CASE("plot data schemas") {
        testing::TempDir dir("exp_emit");
        auto corpus = synthetic_corpus(400, 3);
        for (auto& r : corpus) r.annotations.lean.reset();
        io::write_records_jsonl(dir.file("corpus.jsonl"), corpus);
        const auto store = run(write_spec(dir, "chain.json",
                                          {{"kind", "chain"},
                                           {"corpus", "corpus.jsonl"},
                                           {"ratios", {0.25, 0.5}},
                                           {"seeds", {0, 1}},
                                           {"chain", small_chain()},
                                           {"out", "out"}}));
        const auto evo = csv::parse(emit_plot_data(store, PlotKind::evolution));
        CHECK(evo.header == std::vector<std::string>{"dataset", "domain", "generation", "ratio", "seed", "metric", "value"});
        const auto abs = csv::parse(emit_plot_data(store, PlotKind::interaction_absolute));
        const auto rel = csv::parse(emit_plot_data(store, PlotKind::interaction_relative));
        REQUIRE(abs.rows.size() == rel.rows.size());
        for (const auto& r : abs.rows) CHECK(r[1] == "default");

        // relative rows agree with relative.csv, which comes from relative_metrics
        const auto relcsv = csv::read_file(dir.file("out/relative.csv"));
        std::map<std::tuple<std::string, std::string, std::string>, std::string> expect;
        for (const auto& r : relcsv.rows) expect[{r[1], r[2], r[4]}] = r[5];
        for (const auto& r : rel.rows) {
            auto it = expect.find({r[2], r[3], r[4]});
            REQUIRE(it != expect.end());
            if (it->second == "undefined") CHECK(r[5] == "undefined");
            else CHECK(std::abs(std::stod(r[5]) - std::stod(it->second)) <= 1e-12 * std::abs(std::stod(it->second)));
        }
        try {
            emit_plot_data(store, PlotKind::lean_evolution);
            FAIL("expected InvalidInput");
        } catch (const InvalidInput& e) {
            CHECK(std::string(e.what()).find("missing column 'lean'") != std::string::npos);
        }
        CHECK_THROWS_AS(emit_plot_data(store, PlotKind::lean_stacked), InvalidInput);
        CHECK_THROWS_AS(parse_plot_kind("scatter"), InvalidConfig);
    }

    TEST_CASE("lean experiment and its figures") {
        testing::TempDir dir("exp_lean");
        io::write_records_jsonl(dir.file("corpus.jsonl"), synthetic_corpus(600, 4));
        const auto store = run(write_spec(dir, "lean.json",
                                          {{"kind", "lean"},
                                           {"corpus", "corpus.jsonl"},
                                           {"ratios", {0.5}},
                                           {"seeds", {0, 1}},
                                           {"chain", small_chain()},
                                           {"lean", {{"fractions", {0.0, 0.5, 1.0}}, {"size", 120}}},
                                           {"out", "out"}}));
        CHECK(store.cells == 6);
        CHECK(store.failures.empty());
        const auto io_ = csv::parse(emit_plot_data(store, PlotKind::lean_in_out));
        CHECK(io_.header == std::vector<std::string>{"initial_lean", "final_lean", "seed", "dataset", "ratio"});
        CHECK(io_.rows.size() == 6);
        for (const auto& r : io_.rows) {
            const double initial = std::stod(r[0]);
            if (r[3] == "left0") CHECK(initial > 50);
            if (r[3] == "left1") CHECK(initial < 50);
        }
        const auto st = csv::parse(emit_plot_data(store, PlotKind::lean_stacked));
        CHECK(st.header.size() == 4 + 10);
        for (const auto& r : st.rows) {
            double s = 0;
            for (int b = 0; b < 8; ++b) s += std::stod(r[static_cast<std::size_t>(4 + b)]);
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        const auto le = csv::parse(emit_plot_data(store, PlotKind::lean_evolution));
        CHECK(le.rows.size() == 3 * 2 * 4);
    }

    TEST_CASE("cluster regression grid") {
        testing::TempDir dir("exp_clusters");
        const std::size_t nclusters = 10, per = 60;
        const auto corpus = synthetic_corpus(nclusters * per, 5);
        io::write_records_jsonl(dir.file("corpus.jsonl"), corpus);
        Rng rng(6);
        std::normal_distribution<double> z;
        Eigen::MatrixXd emb(static_cast<Eigen::Index>(corpus.size()), 8), proj(static_cast<Eigen::Index>(corpus.size()), 2);
        for (Eigen::Index i = 0; i < emb.rows(); ++i) {
            for (int j = 0; j < 8; ++j) emb(i, j) = z(rng) + (j == static_cast<int>(i / per % 8) ? 3.0 : 0.0);
            proj.row(i) << z(rng) * (1 + static_cast<double>(i / per)), z(rng);
        }
        io::write_emb1(dir.file("emb.emb"), emb);
        io::write_emb1(dir.file("proj.emb"), proj);
        std::vector<clustering::ClusterSpec> clusters;
        for (std::size_t c = 0; c < nclusters; ++c) {
            clustering::ClusterSpec cs{c, "kmeans", {{"k", 10}}, {}};
            for (std::size_t i = 0; i < per; ++i) cs.record_indices.push_back(c * per + i);
            clusters.push_back(cs);
        }
        io::write_cluster_manifest(dir.file("clusters.jsonl"), clusters);
        json chain = {{"generations", 3}, {"initial_human", 20}, {"per_gen_total", 20}, {"eval_sample", 10}};
        const auto store = run(write_spec(dir, "cr.json",
                                          {{"kind", "cluster-regression"},
                                           {"corpus", "corpus.jsonl"},
                                           {"embeddings", "emb.emb"},
                                           {"projection", "proj.emb"},
                                           {"clusters", "clusters.jsonl"},
                                           {"ratios", {0.5}},
                                           {"seeds", {0, 1}},
                                           {"chain", chain},
                                           {"out", "out"}}),
                               2);
        CHECK(store.cells == 20);
        CHECK(store.failures.empty());
        const auto obs = io::read_observations_csv(dir.file("out/observations.csv"));
        CHECK(obs.size() == 20);
        const auto res = csv::read_file(dir.file("out/regression_results.csv"));
        CHECK(res.header.front() == "group");
        CHECK(res.rows.size() == 2 * 7); // intercept + six properties, two dependents
        CHECK(fs::exists(dir.file("out/regression_table.txt")));
    }

    TEST_CASE("mixed-domain grid") {
        testing::TempDir dir("exp_mixed");
        const std::vector<std::string> domains{"news", "web", "forum"};
        const std::size_t per = 30;
        auto corpus = synthetic_corpus(9 * per, 7);
        std::vector<clustering::ClusterSpec> clusters;
        for (std::size_t c = 0; c < 9; ++c) {
            clustering::ClusterSpec cs{c, "kmeans", {{"k", 9}}, {}};
            for (std::size_t i = 0; i < per; ++i) {
                corpus[c * per + i].domain = domains[c % 3];
                cs.record_indices.push_back(c * per + i);
            }
            clusters.push_back(cs);
        }
        io::write_records_jsonl(dir.file("corpus.jsonl"), corpus);
        io::write_cluster_manifest(dir.file("clusters.jsonl"), clusters);
        Rng rng(8);
        std::normal_distribution<double> z;
        Eigen::MatrixXd emb(static_cast<Eigen::Index>(corpus.size()), 4);
        for (Eigen::Index i = 0; i < emb.rows(); ++i) emb.row(i) << z(rng), z(rng), z(rng), z(rng);
        io::write_emb1(dir.file("emb.emb"), emb);
        json chain = {{"generations", 2}, {"initial_human", 30}, {"per_gen_total", 30}, {"eval_sample", 5}};
        const auto store = run(write_spec(dir, "mixed.json",
                                          {{"kind", "mixed-domain"},
                                           {"corpus", "corpus.jsonl"},
                                           {"embeddings", "emb.emb"},
                                           {"clusters", "clusters.jsonl"},
                                           {"ratios", {0.5}},
                                           {"seeds", {0}},
                                           {"chain", chain},
                                           {"out", "out"}}));
        CHECK(store.cells == 3);
        CHECK(store.failures.empty());
        const auto obs = io::read_observations_csv(dir.file("out/observations.csv"));
        CHECK(obs.size() == 9);
        std::set<std::string> doms;
        for (const auto& o : obs) doms.insert(o.domain);
        CHECK(doms.size() == 3);
        // 3 groups cannot support 18 predictors: every regression is skipped with a notice
        const auto res = csv::read_file(dir.file("out/regression_results.csv"));
        for (const auto& r : res.rows) CHECK(r[res.column("notice")].find("skipped") != std::string::npos);
    }

    TEST_CASE("data properties") {
        auto rs = synthetic_corpus(50, 9);
        metrics::EmbeddingMatrix e;
        e.values = Eigen::MatrixXd::Random(50, 3);
        PropertyInputs in;
        in.embeddings = &e;
        const auto p = data_properties(rs, in);
        REQUIRE(p.size() == 6);
        CHECK(std::abs(p[0] - metrics::cosine_diversity(e.values)) < 1e-12);
        CHECK(std::abs(p[2] - metrics::gaussianity_aic(metrics::pca_2d(e.values)).aic) < 1e-9);
        CHECK(std::abs(p[5] - metrics::avg_text_length(texts_of(rs))) < 1e-12);
        CHECK_THROWS_AS(data_properties(rs, PropertyInputs{}), InvalidInput);
    }
}
