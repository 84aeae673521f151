#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "collapse_lab/chain.hpp"
#include "collapse_lab/clustering.hpp"
#include "collapse_lab/config.hpp"
#include "collapse_lab/errors.hpp"
#include "collapse_lab/experiment.hpp"
#include "collapse_lab/generators.hpp"
#include "collapse_lab/judge.hpp"
#include "collapse_lab/metrics.hpp"
#include "collapse_lab/regression.hpp"
#include "collapse_lab/text.hpp"
#include "collapse_lab/toy_model.hpp"

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

py::dict report_dict(const clab::metrics::MetricReport& r) {
    py::dict d;
    for (const auto& [k, v] : r.values) d[py::str(k)] = v;
    return d;
}

clab::metrics::Projection2D as_projection(const Eigen::MatrixXd& m) {
    if (m.cols() != 2) throw clab::InvalidInput("projection must have 2 columns");
    return m;
}

std::vector<clab::TextRecord> records_from(const py::list& items) {
    std::vector<clab::TextRecord> out;
    for (const auto& item : items) {
        if (py::isinstance<py::str>(item)) {
            out.push_back(clab::human_record(item.cast<std::string>()));
            continue;
        }
        const auto d = item.cast<py::dict>();
        clab::TextRecord r = clab::human_record(d["text"].cast<std::string>());
        if (d.contains("domain")) r.domain = d["domain"].cast<std::string>();
        if (d.contains("quality")) r.annotations.quality = d["quality"].cast<int>();
        if (d.contains("lean")) r.annotations.lean = d["lean"].cast<int>();
        if (d.contains("positivity")) r.annotations.positivity = d["positivity"].cast<double>();
        out.push_back(std::move(r));
    }
    return out;
}

py::list records_to(const std::vector<clab::TextRecord>& recs) {
    py::list out;
    for (const auto& r : recs) {
        py::dict d;
        d["text"] = r.text;
        if (r.domain) d["domain"] = *r.domain;
        if (r.annotations.quality) d["quality"] = *r.annotations.quality;
        if (r.annotations.lean) d["lean"] = *r.annotations.lean;
        if (r.annotations.positivity) d["positivity"] = *r.annotations.positivity;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "collapse-lab core";

    auto base = py::register_exception<clab::Error>(m, "Error");
    py::register_exception<clab::InvalidConfig>(m, "InvalidConfig", base);
    py::register_exception<clab::InvalidInput>(m, "InvalidInput", base);
    py::register_exception<clab::DegenerateInput>(m, "DegenerateInput", base);
    py::register_exception<clab::RankDeficient>(m, "RankDeficient", base);
    py::register_exception<clab::DataExhaustion>(m, "DataExhaustion", base);
    py::register_exception<clab::InvalidTrace>(m, "InvalidTrace", base);
    py::register_exception<clab::ShortfallError>(m, "ShortfallError", base);

    // toy model
    py::class_<clab::toy::ToyConfig>(m, "ToyConfig")
        .def(py::init<>())
        .def_readwrite("support_size", &clab::toy::ToyConfig::support_size)
        .def_readwrite("ratio", &clab::toy::ToyConfig::ratio)
        .def_readwrite("steps", &clab::toy::ToyConfig::steps)
        .def_readwrite("runs", &clab::toy::ToyConfig::runs)
        .def_readwrite("bias_period", &clab::toy::ToyConfig::bias_period)
        .def_readwrite("bias_strength", &clab::toy::ToyConfig::bias_strength)
        .def_readwrite("overlap", &clab::toy::ToyConfig::overlap)
        .def_readwrite("accumulate", &clab::toy::ToyConfig::accumulate)
        .def_readwrite("prior_pseudocount", &clab::toy::ToyConfig::prior_pseudocount)
        .def_readwrite("seed", &clab::toy::ToyConfig::seed);

    m.def("run_toy_chain", [](const clab::toy::ToyConfig& cfg) {
        const auto t = clab::toy::run_toy_chain(cfg);
        py::list summary;
        for (const auto& s : t.summary)
            summary.append(py::dict("step"_a = s.step, "mean_support_fraction"_a = s.mean_support_fraction,
                                    "mean_shannon_entropy"_a = s.mean_shannon_entropy,
                                    "se_shannon_entropy"_a = s.se_shannon_entropy));
        py::list records;
        for (const auto& r : t.records)
            records.append(py::make_tuple(r.run, r.step, r.support_fraction, r.shannon_entropy));
        return py::dict("summary"_a = summary, "records"_a = records);
    }, "cfg"_a, "Runs every toy chain; returns per-step summary and (run, step, support, entropy) records.");

    // metrics
    m.def("tokenize", &clab::text::tokenize, "text"_a);
    m.def("cosine_diversity", &clab::metrics::cosine_diversity, "embeddings"_a);
    m.def("knn_cosine_diversity", &clab::metrics::knn_cosine_diversity, "embeddings"_a, "k"_a);
    m.def("bleu", [](const std::vector<std::string>& cand, const std::vector<std::vector<std::string>>& refs, int max_n, bool smooth) {
        return clab::metrics::bleu(cand, refs, max_n, smooth ? clab::metrics::BleuSmoothing::add_one : clab::metrics::BleuSmoothing::none);
    }, "candidate"_a, "references"_a, "max_n"_a = 4, "smoothing"_a = true);
    m.def("self_bleu", [](const std::vector<std::string>& texts, int max_n, bool smooth, std::size_t max_texts, std::uint64_t seed) {
        return clab::metrics::self_bleu(texts, max_n, smooth ? clab::metrics::BleuSmoothing::add_one : clab::metrics::BleuSmoothing::none,
                                        max_texts, seed).value;
    }, "texts"_a, "max_n"_a = 4, "smoothing"_a = true, "max_texts"_a = 250, "seed"_a = 0);
    m.def("word_entropy", [](const std::vector<std::string>& t) { return clab::metrics::word_entropy(t); }, "texts"_a);
    m.def("type_token_ratio", [](const std::vector<std::string>& t, std::size_t prefix) {
        return clab::metrics::type_token_ratio(t, prefix).value;
    }, "texts"_a, "prefix_chars"_a = 200);
    m.def("avg_text_length", [](const std::vector<std::string>& t) { return clab::metrics::avg_text_length(t); }, "texts"_a);
    m.def("kl_entropy", [](const Eigen::MatrixXd& p, int k, std::uint64_t seed) {
        return clab::metrics::kl_entropy(as_projection(p), k, seed);
    }, "points"_a, "k"_a = 5, "jitter_seed"_a = 0);
    m.def("gaussianity_aic", [](const Eigen::MatrixXd& p) {
        const auto g = clab::metrics::gaussianity_aic(as_projection(p));
        return py::dict("aic"_a = g.aic, "aic_per_point"_a = g.aic_per_point, "log_likelihood"_a = g.log_likelihood,
                        "mean"_a = Eigen::VectorXd(g.mean), "covariance"_a = Eigen::MatrixXd(g.covariance));
    }, "points"_a);
    m.def("pca_2d", [](const Eigen::MatrixXd& e) { return Eigen::MatrixXd(clab::metrics::pca_2d(e)); }, "embeddings"_a);
    m.def("lean_bins", [](const std::vector<double>& s, int bins) {
        const auto b = clab::metrics::lean_bins(s, bins);
        return py::dict("proportions"_a = b.proportions, "neutral_fraction"_a = b.neutral_fraction,
                        "non_political_fraction"_a = b.non_political_fraction);
    }, "scores"_a, "bins"_a = 8);

    // clustering
    m.def("kmeans", [](const Eigen::MatrixXd& p, int k, std::uint64_t seed) { return clab::clustering::kmeans(p, k, seed).labels; },
          "points"_a, "k"_a, "seed"_a = 0);
    m.def("gmm_em", [](const Eigen::MatrixXd& p, int k, std::uint64_t seed) {
        const auto g = clab::clustering::gmm_em(p, k, seed);
        return py::dict("labels"_a = g.assignment.labels, "weights"_a = g.weights, "log_likelihood"_a = g.log_likelihood);
    }, "points"_a, "k"_a, "seed"_a = 0);
    m.def("dbscan", [](const Eigen::MatrixXd& p, double eps, int min_pts) { return clab::clustering::dbscan(p, eps, min_pts).labels; },
          "points"_a, "eps"_a, "min_pts"_a);
    m.def("propagate_labels", &clab::clustering::propagate_labels, "sample_points"_a, "sample_labels"_a, "points"_a,
          "exclude_noise"_a = false);

    // regression
    m.def("ols_fit", [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> names, bool intercept) {
        if (names.empty())
            for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j));
        const auto r = clab::regression::ols_fit({x, names, intercept}, y);
        py::list coefs;
        for (const auto& c : r.coefficients)
            coefs.append(py::dict("name"_a = c.name, "estimate"_a = c.estimate, "std_error"_a = c.std_error, "t"_a = c.t,
                                  "p_value"_a = c.p_value));
        return py::dict("coefficients"_a = coefs, "r_squared"_a = r.r_squared, "adj_r_squared"_a = r.adj_r_squared,
                        "df_residual"_a = r.df_residual, "vif"_a = r.vif);
    }, "x"_a, "y"_a, "names"_a = std::vector<std::string>{}, "intercept"_a = true);
    m.def("vif", [](const Eigen::MatrixXd& x) {
        std::vector<std::string> names;
        for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j));
        return clab::regression::vif({x, names, true});
    }, "x"_a);

    // chain
    m.def("run_chain", [](const std::string& config_json, const py::list& corpus, double smoothing) {
        auto cfg = clab::config::chain_config(nlohmann::json::parse(config_json));
        std::map<std::string, clab::GeneratorSpec> specs;
        for (const auto& k : cfg.generator_kinds) specs[k] = clab::GeneratorSpec{"resampler", smoothing, {}};
        const auto recs = records_from(corpus);
        clab::ChainOptions opts;
        opts.annotator = clab::corpus_lookup_annotator(recs);
        py::gil_scoped_release nogil;
        auto trace = clab::run_chain(cfg, recs, clab::make_generator_factory(specs), opts);
        py::gil_scoped_acquire gil;
        py::list gens;
        for (const auto& ev : trace.evaluations)
            gens.append(py::dict("generation"_a = ev.generation, "domain"_a = ev.domain, "skipped"_a = ev.skipped,
                                 "batch_size"_a = ev.batch_size, "metrics"_a = report_dict(ev.report)));
        py::dict relative;
        try {
            for (const auto& [k, v] : clab::relative_metrics(trace)) relative[py::str(k)] = v ? py::cast(*v) : py::none();
        } catch (const clab::InvalidTrace&) {
        }
        return py::dict("evaluations"_a = gens, "pool_sizes"_a = trace.pool_sizes, "synthetic_counts"_a = trace.synthetic_counts,
                        "kinds"_a = trace.kinds, "relative"_a = relative);
    }, "config_json"_a, "corpus"_a, "smoothing"_a = 0.0,
       "Runs one chain with resampler generators. corpus: list of str or dicts with text/domain/quality/lean/positivity.");

    // judge
    m.def("render_prompt", [](const std::string& kind, const std::string& text) {
        return clab::render_prompt(clab::parse_judge_kind(kind), text);
    }, "kind"_a, "text"_a);
    m.def("parse_score", [](const std::string& kind, const std::string& raw) {
        return clab::parse_score(clab::parse_judge_kind(kind), raw);
    }, "kind"_a, "raw"_a);
    m.def("build_lean_mixture", [](const py::list& left, const py::list& right, double fraction, std::size_t size, std::uint64_t seed) {
        return records_to(clab::build_lean_mixture(records_from(left), records_from(right), fraction, size, seed));
    }, "left"_a, "right"_a, "left_fraction"_a, "size"_a, "seed"_a = 0);

    // experiments
    m.def("run_experiment", [](const std::string& config_path, const std::string& out, int jobs) {
        auto spec = clab::ExperimentSpec::load(config_path);
        if (!out.empty()) spec.out_dir = out;
        py::gil_scoped_release nogil;
        const auto store = clab::run_experiment(spec, jobs);
        py::gil_scoped_acquire gil;
        py::list failures;
        for (const auto& f : store.failures) failures.append(py::make_tuple(f.cell, f.error));
        return py::dict("out_dir"_a = store.out_dir, "spec_hash"_a = store.spec_hash, "cells"_a = store.cells,
                        "failures"_a = failures, "artifacts"_a = store.artifacts);
    }, "config_path"_a, "out"_a = "", "jobs"_a = 1);
    m.def("emit_plot_data", [](const std::string& store_dir, const std::string& kind) {
        return clab::emit_plot_data(clab::ResultStore::open(store_dir), clab::parse_plot_kind(kind));
    }, "store_dir"_a, "figure"_a);
    m.def("spec_hash", [](const std::string& json_text) { return clab::config::spec_hash(nlohmann::json::parse(json_text)); },
          "json_text"_a);

#ifdef VERSION_INFO
    m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
    m.attr("__version__") = "dev";
#endif
}
