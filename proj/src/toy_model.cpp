#include "collapse_lab/toy_model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "collapse_lab/errors.hpp"

namespace clab::toy {

void DiscreteDistribution::validate() const {
    if (probs.empty()) throw InvalidInput("distribution has empty support");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("distribution has a negative or non-finite entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("distribution sums to " + std::to_string(sum));
}

void ToyConfig::validate() const {
    if (support_size < 1) throw InvalidConfig("support_size must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidConfig("ratio must lie in [0,1]");
    if (steps < 1) throw InvalidConfig("steps must be >= 1");
    if (runs < 1) throw InvalidConfig("runs must be >= 1");
    if (bias_period < 1) throw InvalidConfig("bias_period must be >= 1");
    if (support_size < bias_period) throw InvalidConfig("support_size must be >= bias_period");
    if (!(bias_strength > 0.0)) throw InvalidConfig("bias_strength must be > 0");
    if (!(prior_pseudocount >= 0.0)) throw InvalidConfig("prior_pseudocount must be >= 0");
    if (!overlap && bias_period == 1) throw InvalidConfig("overlap=false with bias_period=1 leaves an empty true support");
}

DiscreteDistribution make_true_distribution(int support_size, std::optional<int> exclude_period) {
    if (support_size < 1) throw InvalidConfig("support_size must be >= 1");
    if (exclude_period && *exclude_period < 1) throw InvalidConfig("exclude_period must be >= 1");
    std::vector<double> probs(static_cast<std::size_t>(support_size) + 1, 0.0);
    std::size_t allowed = 0;
    for (int i = 0; i <= support_size; ++i) {
        if (!exclude_period || i % *exclude_period != 0) {
            probs[i] = 1.0;
            ++allowed;
        }
    }
    if (allowed == 0) throw InvalidConfig("true distribution has no allowed index");
    for (double& p : probs) p /= static_cast<double>(allowed);
    return {std::move(probs)};
}

DiscreteDistribution fit_biased_counts(std::span<const double> counts, int bias_period, double bias_strength,
                                       double prior_pseudocount) {
    if (counts.empty()) throw InvalidInput("empty count vector");
    if (bias_period < 1) throw InvalidConfig("bias_period must be >= 1");
    if (!(bias_strength > 0.0)) throw InvalidConfig("bias_strength must be > 0");
    std::vector<double> w(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double factor = (i % static_cast<std::size_t>(bias_period) == 0) ? bias_strength : 1.0;
        w[i] = (counts[i] + prior_pseudocount) * factor;
        total += w[i];
    }
    if (!(total > 0.0)) throw InvalidInput("all weighted counts are zero");
    for (double& x : w) x /= total;
    return {std::move(w)};
}

DiscreteDistribution fit_biased_histogram(std::span<const int> samples, int support_size, int bias_period,
                                          double bias_strength, double prior_pseudocount) {
    if (samples.empty()) throw InvalidInput("cannot fit a histogram to an empty sample");
    if (support_size < 0) throw InvalidConfig("support_size must be >= 0");
    std::vector<double> counts(static_cast<std::size_t>(support_size) + 1, 0.0);
    for (int s : samples) {
        if (s < 0 || s > support_size) throw InvalidInput("sample " + std::to_string(s) + " outside [0, N]");
        counts[static_cast<std::size_t>(s)] += 1.0;
    }
    return fit_biased_counts(counts, bias_period, bias_strength, prior_pseudocount);
}

std::vector<int> sample_discrete(const DiscreteDistribution& dist, std::size_t n, Rng& rng) {
    if (n == 0) throw InvalidInput("sample_discrete requires n >= 1");
    dist.validate();
    std::discrete_distribution<int> pick(dist.probs.begin(), dist.probs.end());
    std::vector<int> out(n);
    for (auto& x : out) x = pick(rng);
    return out;
}

Diversity discrete_diversity(const DiscreteDistribution& dist) {
    if (dist.probs.empty()) throw InvalidInput("diversity of an empty distribution");
    std::size_t positive = 0;
    double h = 0.0;
    for (double p : dist.probs) {
        if (p > 0.0) {
            ++positive;
            h -= p * std::log(p);
        }
    }
    return {static_cast<double>(positive) / static_cast<double>(dist.probs.size()), h};
}

Diversity discrete_diversity(std::span<const int> samples, int support_size) {
    return discrete_diversity(fit_biased_histogram(samples, support_size, 1, 1.0));
}

std::size_t synthetic_count(double ratio, std::size_t total) {
    // The epsilon absorbs representation error in ratios like 0.1 or 3/10.
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total) + 1e-9));
}

namespace {

void add_counts(std::vector<double>& counts, std::span<const int> xs) {
    for (int x : xs) counts[static_cast<std::size_t>(x)] += 1.0;
}

} // namespace

ToyTrace run_toy_chain(const ToyConfig& cfg) {
    cfg.validate();
    const auto n_total = static_cast<std::size_t>(cfg.support_size);
    const std::size_t n_synth = synthetic_count(cfg.ratio, n_total);
    const std::size_t n_human = n_total - n_synth;
    const auto truth = make_true_distribution(cfg.support_size,
                                              cfg.overlap ? std::nullopt : std::optional<int>(cfg.bias_period));
    std::discrete_distribution<int> truth_pick(truth.probs.begin(), truth.probs.end());

    ToyTrace trace;
    trace.config = cfg;
    trace.records.reserve(static_cast<std::size_t>(cfg.runs) * static_cast<std::size_t>(cfg.steps));

    for (int run = 0; run < cfg.runs; ++run) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(run)));
        std::vector<double> pool(truth.size(), 0.0);
        std::vector<double> step_counts(truth.size(), 0.0);
        std::vector<int> draws;
        draws.reserve(n_total);

        for (int i = 0; i < static_cast<int>(n_total); ++i) draws.push_back(truth_pick(rng));
        add_counts(pool, draws);
        auto model = fit_biased_counts(pool, cfg.bias_period, cfg.bias_strength, cfg.prior_pseudocount);
        auto div = discrete_diversity(model);
        trace.records.push_back({run, 0, div.support_fraction, div.shannon_entropy});

        for (int step = 1; step < cfg.steps; ++step) {
            draws.clear();
            if (n_synth > 0) {
                std::discrete_distribution<int> model_pick(model.probs.begin(), model.probs.end());
                for (std::size_t i = 0; i < n_synth; ++i) draws.push_back(model_pick(rng));
            }
            for (std::size_t i = 0; i < n_human; ++i) draws.push_back(truth_pick(rng));

            if (cfg.accumulate) {
                add_counts(pool, draws);
                model = fit_biased_counts(pool, cfg.bias_period, cfg.bias_strength, cfg.prior_pseudocount);
            } else {
                std::fill(step_counts.begin(), step_counts.end(), 0.0);
                add_counts(step_counts, draws);
                model = fit_biased_counts(step_counts, cfg.bias_period, cfg.bias_strength, cfg.prior_pseudocount);
            }
            div = discrete_diversity(model);
            trace.records.push_back({run, step, div.support_fraction, div.shannon_entropy});
        }
    }

    const auto runs = static_cast<double>(cfg.runs);
    for (int step = 0; step < cfg.steps; ++step) {
        ToyStepSummary s;
        s.step = step;
        double sum_sq = 0.0;
        for (int run = 0; run < cfg.runs; ++run) {
            const auto& r = trace.records[static_cast<std::size_t>(run * cfg.steps + step)];
            s.mean_support_fraction += r.support_fraction;
            s.mean_shannon_entropy += r.shannon_entropy;
        }
        s.mean_support_fraction /= runs;
        s.mean_shannon_entropy /= runs;
        for (int run = 0; run < cfg.runs; ++run) {
            const double d = trace.records[static_cast<std::size_t>(run * cfg.steps + step)].shannon_entropy -
                             s.mean_shannon_entropy;
            sum_sq += d * d;
        }
        s.se_shannon_entropy = cfg.runs > 1 ? std::sqrt(sum_sq / (runs - 1.0) / runs) : 0.0;
        trace.summary.push_back(s);
    }
    return trace;
}

} // namespace clab::toy
