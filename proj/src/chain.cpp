#include "collapse_lab/chain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "collapse_lab/errors.hpp"

namespace clab {

void DataPool::add_generation(std::vector<TextRecord> batch) {
    records.insert(records.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    generation_end.push_back(records.size());
}

Rotation parse_rotation(const std::string& s) {
    if (s == "mixed") return Rotation::mixed;
    if (s == "homogeneous") return Rotation::homogeneous;
    throw InvalidConfig("unknown rotation '" + s + "' (expected mixed or homogeneous)");
}

std::string to_string(Rotation r) { return r == Rotation::mixed ? "mixed" : "homogeneous"; }

void ChainConfig::validate() const {
    if (generations < 1) throw InvalidConfig("chain: generations must be >= 1");
    if (per_gen_total == 0) throw InvalidConfig("chain: per_gen_total must be >= 1");
    if (initial_human == 0) throw InvalidConfig("chain: initial_human must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidConfig("chain: ratio must lie in [0,1]");
    if (eval_sample == 0) throw InvalidConfig("chain: eval_sample must be >= 1");
    if (models_per_generation < 1) throw InvalidConfig("chain: models_per_generation must be >= 1");
    if (generator_kinds.empty()) throw InvalidConfig("chain: generator_kinds is empty");
    if (rotation == Rotation::homogeneous && generator_kinds.size() != 1)
        throw InvalidConfig("chain: homogeneous rotation needs exactly one generator kind, got " +
                            std::to_string(generator_kinds.size()));
    if (domains.empty()) throw InvalidConfig("chain: domains is empty");
    if (std::set<std::string>(domains.begin(), domains.end()).size() != domains.size())
        throw InvalidConfig("chain: duplicate domain tags");
    if (multi_domain() && per_gen_total % domains.size() != 0)
        throw InvalidConfig("chain: per_gen_total " + std::to_string(per_gen_total) + " is not divisible by " +
                            std::to_string(domains.size()) + " domains");
}

std::size_t ChainConfig::synthetic_per_generation() const {
    // The epsilon keeps ratios like 0.3 * 10 from flooring to 2.
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(per_gen_total) + 1e-9));
}

std::size_t ChainConfig::human_required() const {
    return initial_human + static_cast<std::size_t>(generations) * human_per_generation();
}

std::vector<std::size_t> split_evenly(std::size_t n, std::size_t parts) {
    if (parts == 0) throw InvalidInput("split_evenly: zero parts");
    std::vector<std::size_t> out(parts, n / parts);
    for (std::size_t i = 0; i < n % parts; ++i) ++out[i];
    return out;
}

HumanCorpus::HumanCorpus(std::vector<TextRecord> records, const std::vector<std::string>& domains, std::uint64_t seed)
    : multi_(domains.size() > 1) {
    Rng rng(seed);
    std::shuffle(records.begin(), records.end(), rng);
    if (!multi_) {
        auto& q = queues_[""];
        for (auto& r : records) q.push_back(std::move(r));
        return;
    }
    for (const auto& d : domains) queues_[d];
    for (auto& r : records) {
        if (!r.domain) throw InvalidInput("multi-domain chain: corpus record without a domain tag");
        auto it = queues_.find(*r.domain);
        if (it != queues_.end()) it->second.push_back(std::move(r));
    }
}

std::vector<TextRecord> HumanCorpus::take(std::size_t n, int generation, const std::string& domain) {
    auto it = queues_.find(multi_ ? domain : "");
    if (it == queues_.end()) throw InvalidInput("corpus has no domain '" + domain + "'");
    auto& q = it->second;
    if (q.size() < n)
        throw DataExhaustion(generation, "human corpus exhausted" + (multi_ ? " for domain '" + domain + "'" : std::string()) +
                                             ": needed " + std::to_string(n) + ", " + std::to_string(q.size()) + " left");
    std::vector<TextRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(std::move(q.front()));
        q.pop_front();
        out.back().source = Source::human;
        out.back().generation = -1;
    }
    return out;
}

std::size_t HumanCorpus::remaining(const std::string& domain) const {
    auto it = queues_.find(multi_ ? domain : "");
    return it == queues_.end() ? 0 : it->second.size();
}

GenerationOutput advance_generation(DataPool& pool, HumanCorpus& corpus, const GeneratorFactory& factory,
                                    const std::vector<std::string>& kinds, const ChainConfig& cfg, int g, Rng& rng) {
    if (kinds.size() != static_cast<std::size_t>(cfg.models_per_generation))
        throw InvalidConfig("advance_generation: expected " + std::to_string(cfg.models_per_generation) +
                            " generator kinds, got " + std::to_string(kinds.size()));
    const std::size_t ndom = cfg.domains.size();

    std::vector<TextRecord> training;
    if (g == 0) {
        const auto shares = split_evenly(cfg.initial_human, ndom);
        for (std::size_t d = 0; d < ndom; ++d) {
            auto part = corpus.take(shares[d], g, cfg.domains[d]);
            training.insert(training.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
    } else {
        if (pool.size() < cfg.per_gen_total)
            throw InvariantViolation("generation " + std::to_string(g) + ": pool holds " + std::to_string(pool.size()) +
                                     " records, fewer than per_gen_total " + std::to_string(cfg.per_gen_total));
        for (std::size_t i : sample_without_replacement(pool.size(), cfg.per_gen_total, rng)) training.push_back(pool.records[i]);
    }

    GenerationOutput out;
    out.training_size = training.size();
    out.training_sources.reserve(training.size());
    for (const auto& r : training) out.training_sources.push_back(r.source);
    out.kinds = kinds;

    const auto synth_by_domain = split_evenly(cfg.synthetic_per_generation(), ndom);
    const auto human_by_domain = split_evenly(cfg.human_per_generation(), ndom);

    // Fresh instances every generation; nothing carries over.
    std::vector<std::unique_ptr<GeneratorModel>> models;
    for (std::size_t m = 0; m < kinds.size(); ++m) {
        models.push_back(factory(kinds[m], derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(g), m)));
        if (!models.back()) throw InvalidConfig("generator factory returned nothing for kind '" + kinds[m] + "'");
    }

    try {
        if (cfg.synthetic_per_generation() > 0)
            for (auto& model : models) model->train(training);
        for (std::size_t d = 0; d < ndom; ++d) {
            const auto per_model = split_evenly(synth_by_domain[d], models.size());
            for (std::size_t m = 0; m < models.size(); ++m) {
                if (per_model[m] == 0) continue;
                // single-domain chains ask for untagged output: the training
                // set mixes untagged human records with tagged synthetic ones
                auto texts = models[m]->generate(per_model[m], cfg.multi_domain() ? cfg.domains[d] : std::string());
                if (texts.size() != per_model[m])
                    throw ProtocolError("generator '" + kinds[m] + "' returned " + std::to_string(texts.size()) +
                                        " texts, expected " + std::to_string(per_model[m]));
                for (auto& t : texts) {
                    TextRecord r;
                    r.text = std::move(t);
                    r.source = Source::synthetic;
                    r.generation = g;
                    r.domain = cfg.domains[d];
                    out.generated.push_back(std::move(r));
                }
            }
        }
    } catch (const TransportError& e) {
        throw TransportError("generation " + std::to_string(g) + ": " + e.what());
    } catch (const ProtocolError& e) {
        throw ProtocolError("generation " + std::to_string(g) + ": " + e.what());
    }

    std::vector<TextRecord> added = out.generated;
    for (std::size_t d = 0; d < ndom; ++d) {
        auto part = corpus.take(human_by_domain[d], g, cfg.domains[d]);
        out.human_added += part.size();
        added.insert(added.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    const std::size_t before = pool.size();
    pool.add_generation(std::move(added));
    if (pool.size() - before != cfg.per_gen_total)
        throw InvariantViolation("generation " + std::to_string(g) + ": pool grew by " +
                                 std::to_string(pool.size() - before) + ", expected " + std::to_string(cfg.per_gen_total));
    return out;
}

std::vector<const GenerationEval*> ChainTrace::for_domain(const std::string& domain) const {
    std::vector<const GenerationEval*> out;
    for (const auto& e : evaluations)
        if (e.domain == domain) out.push_back(&e);
    return out;
}

ChainTrace run_chain(const ChainConfig& cfg, std::vector<TextRecord> corpus_records, const GeneratorFactory& factory,
                     const ChainOptions& opts) {
    cfg.validate();
    if (!factory) throw InvalidConfig("run_chain: no generator factory");

    ChainTrace trace;
    trace.config = cfg;
    HumanCorpus corpus(std::move(corpus_records), cfg.domains, derive_seed(cfg.seed, 2));
    DataPool pool;
    Rng pool_rng(derive_seed(cfg.seed, 0));
    Rng kind_rng(derive_seed(cfg.seed, 1));
    std::uniform_int_distribution<std::size_t> pick_kind(0, cfg.generator_kinds.size() - 1);
    const BatchEvaluator evaluator = opts.evaluator ? opts.evaluator : make_evaluator({});

    for (int g = 0; g < cfg.generations; ++g) {
        std::vector<std::string> kinds;
        for (int m = 0; m < cfg.models_per_generation; ++m)
            kinds.push_back(cfg.rotation == Rotation::homogeneous ? cfg.generator_kinds.front()
                                                                  : cfg.generator_kinds[pick_kind(kind_rng)]);
        auto out = advance_generation(pool, corpus, factory, kinds, cfg, g, pool_rng);
        if (opts.training_sources) opts.training_sources->push_back(std::move(out.training_sources));
        trace.kinds.push_back(out.kinds);
        trace.pool_sizes.push_back(pool.size());
        trace.synthetic_counts.push_back(out.generated.size());
        trace.training_sizes.push_back(out.training_size);

        Rng eval_rng(derive_seed(cfg.seed, 4, static_cast<std::uint64_t>(g)));
        for (const auto& dom : cfg.domains) {
            GenerationEval ev;
            ev.generation = g;
            ev.domain = dom;
            std::vector<TextRecord> batch;
            for (const auto& r : out.generated)
                if (r.domain == dom) batch.push_back(r);
            ev.batch_size = batch.size();
            if (batch.empty()) {
                ev.skipped = true;
            } else {
                std::vector<TextRecord> sample;
                const std::size_t take = std::min(cfg.eval_sample, batch.size());
                for (std::size_t i : sample_without_replacement(batch.size(), take, eval_rng)) sample.push_back(batch[i]);
                if (opts.annotator) opts.annotator(sample);
                ev.report = evaluator(sample);
                ev.report.undersized = batch.size() < cfg.eval_sample;
                if (opts.keep_evaluated) ev.evaluated = std::move(sample);
            }
            trace.evaluations.push_back(std::move(ev));
        }
    }
    return trace;
}

std::map<std::string, std::optional<double>> relative_metrics(const ChainTrace& trace, const std::string& domain) {
    const std::string dom = domain.empty() ? trace.config.domains.front() : domain;
    const auto evs = trace.for_domain(dom);
    if (evs.empty()) throw InvalidTrace("relative_metrics: no evaluations for domain '" + dom + "'");
    const GenerationEval* first = nullptr;
    for (const auto* e : evs)
        if (e->generation == 0) first = e;
    if (!first || first->skipped) throw InvalidTrace("relative_metrics: generation 0 has no evaluated batch");
    const GenerationEval* last = evs.back();
    if (last == first) throw InvalidTrace("relative_metrics: trace has a single generation");
    if (last->skipped) throw InvalidTrace("relative_metrics: final generation has no evaluated batch");

    std::map<std::string, std::optional<double>> out;
    for (const auto& [name, v0] : first->report.values) {
        auto it = last->report.values.find(name);
        if (it == last->report.values.end() || v0 == 0.0 || !std::isfinite(v0)) {
            out[name] = std::nullopt;
            continue;
        }
        out[name] = it->second / v0;
    }
    return out;
}

std::vector<TextRecord> build_mixed_cluster(const std::vector<std::pair<std::string, std::vector<TextRecord>>>& pure) {
    if (pure.size() < 2) throw InvalidInput("mixed cluster needs at least two domains");
    std::set<std::string> seen;
    std::vector<TextRecord> out;
    for (const auto& [tag, recs] : pure) {
        if (!seen.insert(tag).second) throw InvalidInput("duplicate domain tag '" + tag + "'");
        if (recs.empty()) throw InvalidInput("cluster for domain '" + tag + "' is empty");
        for (auto r : recs) {
            r.domain = tag;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::vector<std::vector<TextRecord>> partition_by_score(const std::vector<TextRecord>& records, metrics::ScoreKey key,
                                                        const std::vector<double>& boundaries) {
    for (std::size_t i = 1; i < boundaries.size(); ++i)
        if (!(boundaries[i] > boundaries[i - 1])) throw InvalidInput("partition boundaries must be strictly ascending");
    std::vector<std::size_t> missing;
    std::vector<double> scores(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& a = records[i].annotations;
        std::optional<double> s;
        switch (key) {
        case metrics::ScoreKey::quality:
            if (a.quality) s = *a.quality;
            break;
        case metrics::ScoreKey::lean:
            if (a.lean) s = *a.lean;
            break;
        case metrics::ScoreKey::positivity:
            s = a.positivity;
            break;
        }
        if (!s) missing.push_back(i);
        else scores[i] = *s;
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? "," : "") + std::to_string(missing[i]);
        if (missing.size() > 20) list += ",...";
        throw InvalidInput("records lacking " + metrics::to_string(key) + " score: " + list);
    }
    std::vector<std::vector<TextRecord>> buckets(boundaries.size() + 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto b = std::upper_bound(boundaries.begin(), boundaries.end(), scores[i]) - boundaries.begin();
        buckets[static_cast<std::size_t>(b)].push_back(records[i]);
    }
    return buckets;
}

} // namespace clab
