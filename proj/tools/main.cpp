// collapse-lab command line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "collapse_lab/clustering.hpp"
#include "collapse_lab/config.hpp"
#include "collapse_lab/csv.hpp"
#include "collapse_lab/errors.hpp"
#include "collapse_lab/evaluation.hpp"
#include "collapse_lab/experiment.hpp"
#include "collapse_lab/io.hpp"
#include "collapse_lab/judge.hpp"
#include "collapse_lab/regression.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out;
    int jobs = 1;
};

std::string out_dir(const Common& c, const json& cfg, const std::string& fallback) {
    // --out is relative to the working directory, "out" in a config to the config file
    if (!c.out.empty()) return c.out;
    return clab::config::resolve_path(c.config, cfg.value("out", fallback));
}

std::string cfg_path(const Common& c, const json& cfg, const std::string& key) {
    if (!cfg.contains(key)) throw clab::InvalidConfig("config lacks \"" + key + "\"");
    return clab::config::resolve_path(c.config, cfg[key].get<std::string>());
}

int report(const clab::ResultStore& store) {
    std::cout << "wrote " << store.artifacts.size() << " artifacts to " << store.out_dir << " (spec " << store.spec_hash.substr(0, 12)
              << ", " << store.cells << " cells, " << store.failures.size() << " failed)\n";
    for (const auto& f : store.failures) std::cerr << "  failed: " << f.cell << ": " << f.error << '\n';
    return store.failures.empty() ? 0 : 3;
}

int run_kind(const Common& c, json cfg, const std::string& kind) {
    if (!cfg.contains("kind")) cfg["kind"] = kind;
    if (!c.out.empty()) cfg["out"] = fs::absolute(c.out).string();
    auto spec = clab::ExperimentSpec::from_json(cfg, c.config);
    return report(clab::run_experiment(spec, c.jobs));
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream in(s);
    for (std::string tok; std::getline(in, tok, ',');) {
        if (tok.empty()) continue;
        const auto dash = tok.find('-');
        if (dash != std::string::npos && dash > 0) {
            const auto lo = std::stoull(tok.substr(0, dash)), hi = std::stoull(tok.substr(dash + 1));
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(std::stoull(tok));
        }
    }
    if (out.empty()) throw clab::UsageError("--seeds needs at least one seed");
    return out;
}

double parse_ratio(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) return std::stod(s);
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
}

int cmd_metrics(const Common& c, const json& cfg) {
    auto batch = clab::io::read_records_jsonl(cfg_path(c, cfg, "batch"));
    auto opts = clab::config::evaluation_options(cfg.value("evaluation", json()));
    std::optional<clab::EmbeddingLookup> lookup;
    std::optional<clab::metrics::EmbeddingMatrix> emb;
    if (cfg.contains("embeddings")) {
        emb = clab::io::read_embeddings(cfg_path(c, cfg, "embeddings"));
        lookup.emplace(batch, *emb);
        opts.embeddings = &*lookup;
    }
    auto report = clab::evaluate_batch(batch, opts);
    if (cfg.contains("projection")) {
        const auto proj = clab::io::read_embeddings(cfg_path(c, cfg, "projection"));
        if (proj.cols() != 2) throw clab::InvalidInput("projection must have 2 columns");
        const clab::metrics::Projection2D p = proj.values;
        const int k = cfg.value("kl_k", 5);
        report.values["kl_entropy@k=" + std::to_string(k)] = clab::metrics::kl_entropy(p, k, cfg.value("seed", std::uint64_t{0}));
        report.values["gaussianity_aic"] = clab::metrics::gaussianity_aic(p).aic;
    }
    std::ostringstream s;
    clab::io::write_metric_report_csv(s, report);
    const auto dir = out_dir(c, cfg, "results");
    clab::io::write_text_file((fs::path(dir) / "metrics.csv").string(), s.str());
    std::cout << "wrote " << report.values.size() << " metrics to " << (fs::path(dir) / "metrics.csv").string() << '\n';
    return 0;
}

int cmd_cluster(const Common& c, const json& cfg) {
    const auto proj = clab::io::read_embeddings(cfg_path(c, cfg, "projection"));
    if (cfg.contains("records")) {
        const auto recs = clab::io::read_records_jsonl(cfg_path(c, cfg, "records"));
        if (static_cast<Eigen::Index>(recs.size()) != proj.rows())
            throw clab::InvalidInput("projection has " + std::to_string(proj.rows()) + " rows for " + std::to_string(recs.size()) +
                                     " records");
    }
    const auto suite = clab::config::cluster_suite_config(cfg.value("clustering", json::object()));
    clab::clustering::SuiteStats stats;
    const auto clusters = clab::clustering::build_cluster_suite(proj.values, suite, &stats);
    const auto path = (fs::path(out_dir(c, cfg, "results")) / "clusters.jsonl").string();
    clab::io::write_cluster_manifest(path, clusters);
    std::cout << "wrote " << clusters.size() << " clusters (from " << stats.candidates << " candidates over " << stats.clusterings
              << " clusterings) to " << path << '\n';
    return 0;
}

int cmd_regress(const Common& c, const json& cfg) {
    if (!cfg.contains("observations")) return run_kind(c, cfg, "cluster-regression");
    const auto obs = clab::io::read_observations_csv(cfg_path(c, cfg, "observations"));
    std::vector<std::string> groupings = cfg.value("groupings", std::vector<std::string>{"all"});
    const bool standardized = cfg.value("standardized", true);
    std::vector<clab::regression::GroupRegression> all;
    for (const auto& g : groupings) {
        auto part = clab::regression::property_shift_regression(obs, clab::regression::parse_grouping(g), standardized);
        all.insert(all.end(), part.begin(), part.end());
    }
    const auto dir = out_dir(c, cfg, "results");
    std::ostringstream s;
    clab::io::write_regression_csv(s, all);
    clab::io::write_text_file((fs::path(dir) / "regression_results.csv").string(), s.str());
    const auto table = clab::regression::render_table(all);
    clab::io::write_text_file((fs::path(dir) / "regression_table.txt").string(), table);
    std::cout << table;
    return 0;
}

int cmd_annotate(const Common& c, const json& cfg, const std::string& kind_flag) {
    const auto kind = clab::parse_judge_kind(kind_flag.empty() ? cfg.value("kind", std::string("quality")) : kind_flag);
    auto recs = clab::io::read_records_jsonl(cfg_path(c, cfg, "input"));
    if (!cfg.contains("judge")) throw clab::InvalidConfig("config lacks a \"judge\" section");
    auto jc = clab::config::judge_config(cfg["judge"]);
    if (!jc.cache_path.empty()) jc.cache_path = clab::config::resolve_path(c.config, jc.cache_path);
    const auto outcomes = clab::annotate(clab::texts_of(recs), kind, jc);
    clab::apply_annotations(recs, kind, outcomes);
    std::size_t failed = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        if (!outcomes[i].ok()) {
            ++failed;
            std::cerr << "record " << i << ": " << outcomes[i].message << '\n';
        }
    const auto path = (fs::path(out_dir(c, cfg, "results")) / ("annotated_" + clab::to_string(kind) + ".jsonl")).string();
    clab::io::write_records_jsonl(path, recs);
    std::cout << "annotated " << outcomes.size() - failed << "/" << outcomes.size() << " records -> " << path << '\n';
    return failed ? 3 : 0;
}

int cmd_emit(const Common& c, const json& cfg, const std::string& figure_flag) {
    const auto store_dir = cfg.contains("store") ? cfg_path(c, cfg, "store") : out_dir(c, cfg, "results");
    const auto store = clab::ResultStore::open(store_dir);
    const auto figure = figure_flag.empty() ? cfg.value("figure", std::string("evolution")) : figure_flag;
    const auto kind = clab::parse_plot_kind(figure);
    const auto dir = c.out.empty() ? store_dir : c.out;
    const auto path = (fs::path(dir) / ("plot_" + clab::to_string(kind) + ".csv")).string();
    clab::io::write_text_file(path, clab::emit_plot_data(store, kind));
    std::cout << "wrote " << path << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recursive-training distribution shift laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", COLLAPSE_LAB_VERSION);

    Common common;
    std::string ratio, seeds, generator, kind, figure;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "experiment or command config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--jobs", common.jobs, "cells run in parallel")->check(CLI::PositiveNumber);
        return sub;
    };
    auto* toy = add_common(app.add_subcommand("toy", "toy-model ratio sweep"));
    auto* chain = add_common(app.add_subcommand("chain", "iterative chains over a corpus"));
    chain->add_option("--ratio", ratio, "synthetic ratio, e.g. 0.25 or 1/16");
    chain->add_option("--seeds", seeds, "seed list, e.g. 0,1,2 or 0-4");
    chain->add_option("--generator", generator, "generator kind used every generation");
    auto* metrics = add_common(app.add_subcommand("metrics", "metric suite over a JSONL batch"));
    auto* cluster = add_common(app.add_subcommand("cluster", "build the cluster suite from a 2D projection"));
    auto* regress = add_common(app.add_subcommand("regress", "property -> shift regressions"));
    auto* annotate = add_common(app.add_subcommand("annotate", "score texts with the judge endpoint"));
    annotate->add_option("--kind", kind, "quality or lean")->check(CLI::IsMember({"quality", "lean"}));
    auto* lean = add_common(app.add_subcommand("lean", "political-lean mixture chains"));
    auto* emit = add_common(app.add_subcommand("emit", "tidy plot data from a result store"));
    emit->add_option("--figure", figure, "evolution, interaction-absolute, interaction-relative, lean-evolution, "
                                         "lean-in-out or lean-stacked");

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = clab::config::load(common.config);
        if (*toy) return run_kind(common, cfg, "toy");
        if (*chain) {
            if (!ratio.empty()) cfg["ratios"] = json::array({parse_ratio(ratio)});
            if (!seeds.empty()) cfg["seeds"] = parse_seeds(seeds);
            if (!generator.empty()) {
                cfg["chain"]["generator_kinds"] = json::array({generator});
                cfg["chain"]["rotation"] = "homogeneous";
            }
            return run_kind(common, cfg, "chain");
        }
        if (*metrics) return cmd_metrics(common, cfg);
        if (*cluster) return cmd_cluster(common, cfg);
        if (*regress) return cmd_regress(common, cfg);
        if (*annotate) return cmd_annotate(common, cfg, kind);
        if (*lean) return run_kind(common, cfg, "lean");
        if (*emit) return cmd_emit(common, cfg, figure);
    } catch (const clab::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
