// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// gating criterion fails.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "collapse_lab/chain.hpp"
#include "collapse_lab/clustering.hpp"
#include "collapse_lab/experiment.hpp"
#include "collapse_lab/io.hpp"
#include "collapse_lab/judge.hpp"
#include "collapse_lab/metrics.hpp"
#include "collapse_lab/regression.hpp"
#include "collapse_lab/toy_model.hpp"
#include "support/mock_server.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace clab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string id;
    std::string name;
    double budget_s;
    bool gating;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::vector<double> kToyRatios{1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 3.0 / 4, 15.0 / 16};

std::vector<toy::ToyStepSummary> toy_finals(toy::ToyConfig cfg) {
    std::vector<toy::ToyStepSummary> out;
    for (double r : kToyRatios) {
        cfg.ratio = r;
        out.push_back(toy::run_toy_chain(cfg).final_step());
    }
    return out;
}

std::string entropy_row(const std::vector<toy::ToyStepSummary>& f) {
    std::string s;
    for (const auto& x : f) s += fmt("%s%.3f", s.empty() ? "" : " ", x.mean_shannon_entropy);
    return s;
}

// middle (r=1/2, index 3) below both ends by more than 3 SE
Outcome u_shape(const std::vector<toy::ToyStepSummary>& f) {
    const auto& lo = f.front();
    const auto& mid = f[3];
    const auto& hi = f.back();
    const bool pass = lo.mean_shannon_entropy - mid.mean_shannon_entropy > 3 * mid.se_shannon_entropy &&
                      hi.mean_shannon_entropy - mid.mean_shannon_entropy > 3 * mid.se_shannon_entropy &&
                      lo.mean_shannon_entropy - mid.mean_shannon_entropy > 3 * lo.se_shannon_entropy &&
                      hi.mean_shannon_entropy - mid.mean_shannon_entropy > 3 * hi.se_shannon_entropy;
    return {pass, "H(r)=[" + entropy_row(f) + fmt("] se(1/2)=%.4f", mid.se_shannon_entropy)};
}

// Non-increasing in r, tolerating one adjacent increase no larger than the
// larger standard error of the pair.
bool monotone_within_one(const std::vector<toy::ToyStepSummary>& f) {
    int violations = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        const double rise = f[i].mean_shannon_entropy - f[i - 1].mean_shannon_entropy;
        if (rise <= 0) continue;
        if (rise > std::max(f[i].se_shannon_entropy, f[i - 1].se_shannon_entropy)) return false;
        ++violations;
    }
    return violations <= 1;
}

toy::ToyConfig criterion_toy() {
    toy::ToyConfig cfg;
    cfg.support_size = 1000;
    cfg.runs = 50;
    cfg.bias_strength = 4;
    cfg.overlap = false;
    cfg.accumulate = true;
    return cfg;
}

Outcome c1() { return u_shape(toy_finals(criterion_toy())); }

Outcome c2() {
    auto cfg = criterion_toy();
    cfg.bias_strength = 1;
    const auto weak = toy_finals(cfg);
    cfg = criterion_toy();
    cfg.overlap = true;
    const auto overlap = toy_finals(cfg);
    return {monotone_within_one(weak),
            "bias=1 H(r)=[" + entropy_row(weak) + "]; overlap=true H(r)=[" + entropy_row(overlap) +
                (monotone_within_one(overlap) ? "] monotone" : "] not monotone")};
}

Outcome toy_prior() {
    auto cfg = criterion_toy();
    cfg.bias_strength = 32;
    cfg.prior_pseudocount = 0.01;
    auto out = u_shape(toy_finals(cfg));
    cfg.bias_strength = 1;
    const bool control = monotone_within_one(toy_finals(cfg));
    out.detail += control ? "; bias=1 control monotone" : "; bias=1 control NOT monotone";
    out.pass = out.pass && control;
    return out;
}

const char* const kWords[] = {"river", "stone", "cloud", "lamp", "field", "glass", "north", "paper",
                              "tiger", "ocean", "smoke", "wheel", "quiet", "ember", "frost", "maple"};

std::vector<TextRecord> text_corpus(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> w(0, 15), len(5, 12);
    std::vector<TextRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string t;
        for (int k = len(rng); k > 0; --k) t += std::string(kWords[w(rng)]) + " ";
        out.push_back(human_record(t + "t" + std::to_string(i)));
    }
    return out;
}

GeneratorFactory resampler_factory() { return make_generator_factory({{"resampler", GeneratorSpec{}}}); }

bool accounting_holds(std::size_t per_gen, int generations, std::string& bad) {
    for (double r : {0.0, 0.125, 0.5, 1.0})
        for (int m : {1, 4}) {
            ChainConfig cfg;
            cfg.generations = generations;
            cfg.initial_human = per_gen;
            cfg.per_gen_total = per_gen;
            cfg.ratio = r;
            cfg.models_per_generation = m;
            cfg.seed = 11;
            ChainOptions opts;
            opts.evaluator = [](const std::vector<TextRecord>& b) {
                metrics::MetricReport rep;
                rep.sample_size = b.size();
                return rep;
            };
            opts.keep_evaluated = false;
            const auto trace = run_chain(cfg, text_corpus(cfg.human_required(), 3), resampler_factory(), opts);
            const auto synth = static_cast<std::size_t>(std::floor(static_cast<double>(per_gen) * r));
            for (int g = 0; g < generations; ++g) {
                const auto gi = static_cast<std::size_t>(g);
                if (trace.pool_sizes.at(gi) != per_gen * (gi + 1) || trace.synthetic_counts.at(gi) != synth) {
                    bad = fmt("P=%zu r=%g M=%d g=%d pool=%zu synthetic=%zu", per_gen, r, m, g, trace.pool_sizes[gi],
                              trace.synthetic_counts[gi]);
                    return false;
                }
            }
        }
    return true;
}

Outcome c3() {
    std::string bad;
    const bool full = accounting_holds(4000, 5, bad);
    const bool reduced = full && accounting_holds(400, 20, bad);
    return {full && reduced, full && reduced ? "P=4000 x 5 generations and P=400 x 20 generations, 8 (r,M) cells each" : bad};
}

// r = 1 vs r = 1/16 distinct-text counts, generation 0 -> final, per seed.
// The corpus caps the chain: I + 20 (P - floor(P/16)) human records.
Outcome collapse_direction(std::size_t corpus_size, std::size_t per_gen) {
    const auto corpus = text_corpus(corpus_size, 17);
    auto distinct = [&](double r, std::uint64_t seed) {
        ChainConfig cfg;
        cfg.generations = 20;
        cfg.initial_human = per_gen;
        cfg.per_gen_total = per_gen;
        cfg.ratio = r;
        cfg.seed = seed;
        ChainOptions opts;
        opts.keep_evaluated = false;
        const auto trace = run_chain(cfg, corpus, resampler_factory(), opts);
        const auto evals = trace.for_domain("default");
        return std::pair{evals.front()->report.values.at("distinct_texts"), evals.back()->report.values.at("distinct_texts")};
    };
    int collapsed = 0, stable = 0;
    std::string full, light;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto [a0, a19] = distinct(1.0, s);
        collapsed += a19 < a0;
        full += fmt(" %g->%g", a0, a19);
        const auto [b0, b19] = distinct(1.0 / 16, s);
        stable += b19 / b0 >= 0.95;
        light += fmt(" %g->%g", b0, b19);
    }
    return {collapsed >= 4 && stable >= 4, fmt("corpus %zu, P=I=%zu: r=1 drops %d/5 (", corpus_size, per_gen, collapsed) + full +
                                               fmt(" ); r=1/16 kept %d/5 (", stable) + light + " )"};
}

Outcome c4() { return collapse_direction(2000, 96); }

Outcome c4_scaled() { return collapse_direction(20000, 960); }

Outcome c5() {
    using namespace metrics;
    std::vector<std::string> fails;
    const std::vector<std::string> cand{"the", "cat", "sat"};
    const std::vector<std::vector<std::string>> refs{{"the", "cat", "sat", "on", "the", "mat"}};
    const double b = bleu(cand, refs, 3, BleuSmoothing::none);
    if (std::abs(b - std::exp(-1.0)) > 1e-9) fails.push_back(fmt("bleu=%.12f", b));
    // p = {1/3, 1/2, 1/6}
    const double h_ref = -(std::log2(1.0 / 3) / 3 + std::log2(0.5) / 2 + std::log2(1.0 / 6) / 6);
    const double h = word_entropy(std::vector<std::string>{"a a b b b c"});
    if (std::abs(h - 1.4591) > 1e-4 || std::abs(h - h_ref) > 1e-12) fails.push_back(fmt("word_entropy=%.6f", h));
    Eigen::MatrixXd e(3, 2);
    e << 1, 0, 0, 1, -1, 0;
    if (std::abs(cosine_diversity(e) - 4.0 / 3.0) > 1e-12) fails.push_back("cosine_diversity");
    Rng rng(5);
    std::normal_distribution<double> z;
    for (int t = 0; t < 5; ++t) {
        Eigen::MatrixXd x(40, 6);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
        double sum = 0;
        int pairs = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = i + 1; j < x.rows(); ++j, ++pairs)
                sum += 1 - x.row(i).dot(x.row(j)) / (x.row(i).norm() * x.row(j).norm());
        if (std::abs(knn_cosine_diversity(x, 39) - sum / pairs) > 1e-12) fails.push_back("knn(k=n-1)");
    }
    Projection2D u(10000, 2), g(10000, 2);
    std::uniform_real_distribution<double> unit(0, 1);
    for (Eigen::Index i = 0; i < 10000; ++i) {
        u.row(i) << unit(rng), unit(rng);
        g.row(i) << z(rng), z(rng);
    }
    const double hu = kl_entropy(u, 1), hg = kl_entropy(g, 1);
    const double hg_ref = std::log(2 * std::numbers::pi * std::numbers::e);
    if (std::abs(hu) > 0.1) fails.push_back(fmt("kl uniform=%.4f", hu));
    if (std::abs(hg - hg_ref) > 0.1) fails.push_back(fmt("kl normal=%.4f", hg));
    std::string d = fmt("bleu=%.10f H=%.6f bits kl(unif)=%.4f kl(norm)=%.4f (ref %.4f)", b, h, hu, hg, hg_ref);
    for (const auto& f : fails) d += " FAIL:" + f;
    return {fails.empty(), d};
}

Outcome c6() {
    int ok = 0;
    double worst = -1e300;
    for (std::uint64_t t = 0; t < 100; ++t) {
        Rng rng(derive_seed(606, t));
        std::normal_distribution<double> z;
        metrics::Projection2D one(2000, 2), two(2000, 2);
        for (Eigen::Index i = 0; i < 2000; ++i) {
            one.row(i) << z(rng), z(rng);
            two.row(i) << z(rng) + (i % 2 ? 4.0 : -4.0), z(rng);
        }
        const double a1 = metrics::gaussianity_aic(one).aic, a2 = metrics::gaussianity_aic(two).aic;
        ok += a1 < a2;
        worst = std::max(worst, a1 - a2);
    }
    return {ok == 100, fmt("%d/100 trials, max AIC(single)-AIC(two-mode)=%.1f", ok, worst)};
}

double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const double n = static_cast<double>(p.size());
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        d = std::max({d, static_cast<double>(i + 1) / n - p[i], p[i] - static_cast<double>(i) / n});
    return d;
}

Outcome c7() {
    using namespace regression;
    Rng rng(707);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> np(1, 5), nn(30, 200);
    double worst = 0;
    for (int f = 0; f < 50; ++f) {
        const int p = np(rng), n = nn(rng);
        DesignMatrix d;
        d.x.resize(n, p);
        for (Eigen::Index i = 0; i < d.x.size(); ++i) d.x.data()[i] = z(rng);
        for (int j = 0; j < p; ++j) d.names.push_back("x" + std::to_string(j));
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = 1.0 + d.x.row(i).sum() * 0.5 + z(rng);
        const auto got = ols_fit(d, y);
        const auto ref = oracle::normal_equations(d.x, y);
        for (int k = 0; k <= p; ++k) {
            const auto& c = got.coefficients[static_cast<std::size_t>(k)];
            worst = std::max({worst, std::abs(c.estimate - ref.beta(k)), std::abs(c.std_error - ref.se(k))});
        }
        worst = std::max(worst, std::abs(got.r_squared - ref.r_squared));
    }

    // columns with sample correlation exactly 0.8: u, 0.8u + 0.6v for centered orthonormal u, v
    Eigen::MatrixXd raw(60, 2);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = z(rng);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::VectorXd u = raw.col(0).normalized();
    Eigen::VectorXd v = raw.col(1) - u.dot(raw.col(1)) * u;
    v.normalize();
    DesignMatrix pair;
    pair.x.resize(60, 2);
    pair.x.col(0) = u;
    pair.x.col(1) = 0.8 * u + 0.6 * v;
    pair.names = {"a", "b"};
    const auto vifs = vif(pair);
    const double expect = 1.0 / (1.0 - 0.64);
    const bool vif_ok = std::abs(vifs[0] - expect) < 1e-6 && std::abs(vifs[1] - expect) < 1e-6;

    std::vector<double> pvals;
    for (int rep = 0; rep < 1000; ++rep) {
        DesignMatrix d;
        d.x.resize(100, 1);
        d.names = {"null"};
        Eigen::VectorXd y(100);
        for (int i = 0; i < 100; ++i) {
            d.x(i, 0) = z(rng);
            y(i) = z(rng);
        }
        pvals.push_back(*ols_fit(d, y).coef("null").p_value);
    }
    const double ks = ks_uniform(pvals);
    return {worst < 1e-10 && vif_ok && ks < 0.05,
            fmt("max |ols-oracle|=%.2e, VIF=%.9f (1/0.36=%.9f), KS=%.4f", worst, vifs[0], expect, ks)};
}

Outcome c8() {
    using namespace clustering;
    Rng rng(808);
    std::uniform_int_distribution<int> npts(20, 500), lattice(0, 1), nquery(1, 200), minpts(1, 8);
    std::uniform_real_distribution<double> unit(0, 10), epsd(0.2, 1.5);
    int fixtures_ok = 0;
    std::string bad;
    for (int f = 0; f < 20; ++f) {
        const int n = npts(rng);
        const bool grid = lattice(rng) == 1; // integer coordinates force distance ties
        auto point = [&] { return grid ? std::floor(unit(rng)) : unit(rng); };
        Eigen::MatrixXd p(n, 2);
        for (int i = 0; i < n; ++i) p.row(i) << point(), point();
        const double eps = grid ? std::round(epsd(rng)) + (f % 2 ? 0.0 : 0.5) : epsd(rng);
        const int mp = minpts(rng);
        const auto got = dbscan(p, std::max(eps, 0.5), mp);
        const auto labels = oracle::dbscan(p, std::max(eps, 0.5), mp);
        bool ok = got.labels == labels;
        const int q = nquery(rng);
        Eigen::MatrixXd pts(q, 2);
        for (int i = 0; i < q; ++i) pts.row(i) << point() + (grid ? 0.5 : 0.0), point();
        for (bool ex : {false, true}) {
            if (ex && std::all_of(labels.begin(), labels.end(), [](int l) { return l == kNoise; })) continue;
            ok = ok && propagate_labels(p, labels, pts, ex) == oracle::propagate(p, labels, pts, ex);
        }
        fixtures_ok += ok;
        if (!ok && bad.empty()) bad = fmt(" first mismatch: fixture %d (n=%d)", f, n);
    }
    int runs = 0, monotone = 0;
    std::normal_distribution<double> z;
    for (int f = 0; f < 20; ++f)
        for (int k = 1; k <= 4; ++k) {
            Eigen::MatrixXd p(200, 2);
            for (int i = 0; i < 200; ++i) p.row(i) << z(rng) + 3 * (i % k), z(rng) + (f % 3) * (i % 2);
            const auto g = gmm_em(p, k, derive_seed(8, f, k));
            bool up = true;
            for (std::size_t i = 1; i < g.log_likelihood.size(); ++i)
                up = up && g.log_likelihood[i] >= g.log_likelihood[i - 1] - 1e-9 * std::abs(g.log_likelihood[i - 1]);
            ++runs;
            monotone += up;
        }
    return {fixtures_ok == 20 && monotone == runs,
            fmt("dbscan+propagation %d/20 fixtures, gmm monotone %d/%d runs", fixtures_ok, monotone, runs) + bad};
}

Outcome c9() {
    // scripted scores keyed by the post's index in its text
    std::vector<int> script;
    std::vector<std::string> texts;
    for (int i = 0; i < 240; ++i) {
        script.push_back(i % 6 == 0 ? 50 : i % 6 == 1 ? -1 : i % 2 == 0 ? 10 + i % 40 : 60 + i % 40);
        texts.push_back("post number " + std::to_string(i) + " end");
    }
    testing::MockChatServer judge([&](const json& body) {
        const std::string content = body["messages"].back()["content"];
        const auto at = content.find("post number ");
        const int i = std::stoi(content.substr(at + 12));
        return std::to_string(script[static_cast<std::size_t>(i)]);
    });
    JudgeConfig jc;
    jc.endpoint = judge.url();
    jc.model = "scripted";
    const auto outcomes = annotate_lean(texts, jc);
    std::vector<TextRecord> records;
    for (const auto& t : texts) records.push_back(human_record(t));
    apply_annotations(records, JudgeKind::lean, outcomes);
    const auto parts = partition_lean(records);
    std::set<std::string> left;
    for (const auto& r : parts.left) left.insert(r.text);
    bool ok = parts.excluded == 80;
    std::string comp;
    for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto mix = build_lean_mixture(parts.left, parts.right, frac, 80, 9);
        const auto nl = std::count_if(mix.begin(), mix.end(), [&](const TextRecord& r) { return left.count(r.text) > 0; });
        ok = ok && mix.size() == 80 && static_cast<double>(nl) == frac * 80;
        comp += fmt(" %ld/80", static_cast<long>(nl));
    }

    Rng rng(909);
    std::uniform_int_distribution<int> score(-1, 100), bump(0, 4), size(10, 300);
    std::string bins;
    for (int f = 0; f < 5; ++f) {
        std::vector<double> s;
        const int n = size(rng);
        for (int i = 0; i < n; ++i) s.push_back(bump(rng) == 0 ? 50.0 : score(rng));
        const auto lb = metrics::lean_bins(s, 8);
        double total = 0;
        for (double x : lb.proportions) total += x;
        const auto political = std::count_if(s.begin(), s.end(), [](double x) { return x >= 0; });
        const auto neutral = std::count(s.begin(), s.end(), 50.0);
        const auto nonpol = std::count(s.begin(), s.end(), -1.0);
        const bool f_ok = std::abs(total - 1.0) < 1e-9 &&
                          lb.neutral_fraction == static_cast<double>(neutral) / static_cast<double>(political) &&
                          lb.non_political_fraction == static_cast<double>(nonpol) / static_cast<double>(n);
        ok = ok && f_ok;
        bins += fmt(" %ld/%ld", static_cast<long>(neutral), static_cast<long>(political));
    }
    return {ok, fmt("%d judge requests, left share", judge.requests()) + comp + "; neutral counts" + bins};
}

std::string fixture_corpus(const testing::TempDir& dir, std::size_t n, bool domains) {
    Rng rng(1010);
    std::uniform_int_distribution<int> q(0, 100), lean(-1, 100);
    std::uniform_real_distribution<double> pos(-1, 1);
    auto records = text_corpus(n, 1010);
    const char* const doms[] = {"news", "web", "forum"};
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].annotations.quality = q(rng);
        records[i].annotations.lean = lean(rng);
        records[i].annotations.positivity = pos(rng);
        if (domains) records[i].domain = doms[i % 3];
    }
    const auto path = dir.file(domains ? "corpus_domains.jsonl" : "corpus.jsonl");
    io::write_records_jsonl(path, records);
    return path;
}

Outcome c10() {
    testing::TempDir dir("acceptance_determinism");
    fixture_corpus(dir, 600, false);
    fixture_corpus(dir, 270, true);
    Rng rng(1011);
    std::normal_distribution<double> z;
    Eigen::MatrixXd emb(600, 6), proj(600, 2), emb_d(270, 4);
    for (Eigen::Index i = 0; i < emb.rows(); ++i)
        for (Eigen::Index j = 0; j < 6; ++j) emb(i, j) = z(rng) + (j == i / 60 % 6 ? 2.0 : 0.0);
    for (Eigen::Index i = 0; i < proj.rows(); ++i) proj.row(i) << z(rng) * (1.0 + static_cast<double>(i / 60)), z(rng);
    for (Eigen::Index i = 0; i < emb_d.size(); ++i) emb_d.data()[i] = z(rng);
    io::write_emb1(dir.file("emb.emb"), emb);
    io::write_emb1(dir.file("proj.emb"), proj);
    io::write_emb1(dir.file("emb_domains.emb"), emb_d);
    std::vector<clustering::ClusterSpec> clusters, dclusters;
    for (std::size_t c = 0; c < 10; ++c) {
        clustering::ClusterSpec cs{c, "kmeans", {{"k", 10}}, {}};
        for (std::size_t i = 0; i < 60; ++i) cs.record_indices.push_back(c * 60 + i);
        clusters.push_back(cs);
    }
    for (std::size_t c = 0; c < 9; ++c) {
        clustering::ClusterSpec cs{c, "kmeans", {{"k", 9}}, {}};
        // domain of record i is i % 3; cluster c holds only domain c % 3
        for (std::size_t k = 0; k < 30; ++k) cs.record_indices.push_back(c % 3 + 3 * (c / 3 * 30 + k));
        dclusters.push_back(cs);
    }
    io::write_cluster_manifest(dir.file("clusters.jsonl"), clusters);
    io::write_cluster_manifest(dir.file("clusters_domains.jsonl"), dclusters);

    const json chain = {{"generations", 4}, {"initial_human", 40}, {"per_gen_total", 40}, {"eval_sample", 20}};
    const json small = {{"generations", 3}, {"initial_human", 20}, {"per_gen_total", 20}, {"eval_sample", 10}};
    const json three_domains = {{"generations", 2}, {"initial_human", 30}, {"per_gen_total", 30}, {"eval_sample", 5}};
    const std::vector<std::pair<std::string, json>> specs = {
        {"toy", {{"kind", "toy"}, {"ratios", {0.0625, 0.5, 0.9375}}, {"seeds", {0, 1}}, {"toy", {{"support_size", 200}, {"runs", 10}}}}},
        {"chain", {{"kind", "chain"}, {"corpus", "corpus.jsonl"}, {"ratios", {0.25, 1.0}}, {"chain", chain}}},
        {"lean",
         {{"kind", "lean"},
          {"corpus", "corpus.jsonl"},
          {"ratios", {0.5}},
          {"seeds", {0, 1}},
          {"chain", chain},
          {"lean", {{"fractions", {0.0, 0.5, 1.0}}, {"size", 120}}}}},
        {"cluster-regression",
         {{"kind", "cluster-regression"},
          {"corpus", "corpus.jsonl"},
          {"embeddings", "emb.emb"},
          {"projection", "proj.emb"},
          {"clusters", "clusters.jsonl"},
          {"ratios", {0.5}},
          {"seeds", {0, 1}},
          {"chain", small}}},
        {"mixed-domain",
         {{"kind", "mixed-domain"},
          {"corpus", "corpus_domains.jsonl"},
          {"embeddings", "emb_domains.emb"},
          {"clusters", "clusters_domains.jsonl"},
          {"ratios", {0.5}},
          {"seeds", {0}},
          {"chain", three_domains}}},
    };
    std::size_t compared = 0;
    std::string bad;
    for (const auto& [name, base] : specs) {
        std::vector<ResultStore> stores;
        for (const char* side : {"a", "b"}) {
            json j = base;
            j["out"] = name + "_" + side;
            const auto path = dir.write(name + "_" + side + ".json", j.dump(2));
            stores.push_back(run_experiment(ExperimentSpec::load(path), std::string(side) == "a" ? 1 : 3));
        }
        if (!stores[0].failures.empty()) bad += " " + name + ": cell failure " + stores[0].failures.front().error;
        if (stores[0].artifacts != stores[1].artifacts) bad += " " + name + ": artifact lists differ";
        for (const auto& f : stores[0].artifacts) {
            if (!f.ends_with(".csv")) continue;
            ++compared;
            if (testing::slurp(dir.file(name + "_a/" + f)) != testing::slurp(dir.file(name + "_b/" + f))) bad += " " + name + "/" + f;
        }
    }
    return {bad.empty() && compared > 0,
            fmt("%zu CSVs over 5 experiment kinds identical across reruns (jobs 1 vs 3)", compared) + (bad.empty() ? "" : "; differ:" + bad)};
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"1", "toy U-shape (bias 4, disjoint support)", 60, true, c1},
        {"2", "toy control without U-shape", 60, true, c2},
        {"3", "chain accounting", 10, true, c3},
        {"4", "resampler collapse direction", 300, true, c4},
        {"5", "metric oracles", 30, true, c5},
        {"6", "gaussianity ordering", 30, true, c6},
        {"7", "regression oracle", 60, true, c7},
        {"8", "clustering oracles", 60, true, c8},
        {"9", "lean pipeline", 10, true, c9},
        {"10", "end-to-end determinism", 600, true, c10},
        {"1b", "toy U-shape with prior pseudo-count 0.01, bias 32 (informational)", 60, false, toy_prior},
        {"4b", "resampler collapse direction at 10x corpus (informational)", 300, false, c4_scaled},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        if (!pass && c.gating) ++failed;
        std::printf("%s criterion %-2s %s [%.1fs/%.0fs%s]: %s\n", pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(), secs,
                    c.budget_s, in_time ? "" : " over budget", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d gating criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
