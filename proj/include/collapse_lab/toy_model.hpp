#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "collapse_lab/random.hpp"

// Histogram-learner toy model of recursive training. A "model" is a
// normalized, bias-weighted histogram over the integers {0..N}; each step it
// is refitted on a mix of its own samples and fresh draws from the true
// distribution.
namespace clab::toy {

struct DiscreteDistribution {
    std::vector<double> probs; // support {0 .. probs.size()-1}

    std::size_t size() const noexcept { return probs.size(); }
    // Throws InvalidInput unless entries are >= 0 and sum to 1 within 1e-9.
    void validate() const;
};

struct ToyConfig {
    int support_size = 1000; // N; support is {0..N}
    double ratio = 0.5;
    int steps = 20;
    int runs = 50;
    int bias_period = 2;
    double bias_strength = 4.0;
    bool overlap = true;
    bool accumulate = true;
    // Pseudo-count added to every index before the bias is applied (a
    // Dirichlet prior on the learner). 0 gives the plain biased histogram.
    double prior_pseudocount = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Diversity {
    double support_fraction = 0.0;
    double shannon_entropy = 0.0; // nats
};

struct ToyRecord {
    int run = 0;
    int step = 0;
    double support_fraction = 0.0;
    double shannon_entropy = 0.0;
};

struct ToyStepSummary {
    int step = 0;
    double mean_support_fraction = 0.0;
    double mean_shannon_entropy = 0.0;
    double se_shannon_entropy = 0.0; // standard error of the run mean
};

struct ToyTrace {
    ToyConfig config;
    std::vector<ToyRecord> records;      // run-major, one per (run, step)
    std::vector<ToyStepSummary> summary; // one per step, averaged over runs

    const ToyStepSummary& final_step() const { return summary.back(); }
};

DiscreteDistribution make_true_distribution(int support_size, std::optional<int> exclude_period = std::nullopt);

DiscreteDistribution fit_biased_histogram(std::span<const int> samples, int support_size, int bias_period,
                                          double bias_strength, double prior_pseudocount = 0.0);

// Same fit from precomputed per-index counts (length N+1).
DiscreteDistribution fit_biased_counts(std::span<const double> counts, int bias_period, double bias_strength,
                                       double prior_pseudocount = 0.0);

std::vector<int> sample_discrete(const DiscreteDistribution& dist, std::size_t n, Rng& rng);

Diversity discrete_diversity(const DiscreteDistribution& dist);
// Diversity of the empirical distribution of `samples` over {0..support_size}.
Diversity discrete_diversity(std::span<const int> samples, int support_size);

// Number of synthetic draws per step: floor(r * N).
std::size_t synthetic_count(double ratio, std::size_t total);

ToyTrace run_toy_chain(const ToyConfig& cfg);

} // namespace clab::toy
