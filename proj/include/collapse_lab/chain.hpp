#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "collapse_lab/evaluation.hpp"
#include "collapse_lab/generators.hpp"
#include "collapse_lab/metrics.hpp"
#include "collapse_lab/random.hpp"
#include "collapse_lab/records.hpp"

namespace clab {

// Accumulated data pool. generation_end[g] is the pool size after
// generation g completed.
struct DataPool {
    std::vector<TextRecord> records;
    std::vector<std::size_t> generation_end;

    std::size_t size() const noexcept { return records.size(); }
    void add_generation(std::vector<TextRecord> batch);
};

enum class Rotation { mixed, homogeneous };
Rotation parse_rotation(const std::string& s);
std::string to_string(Rotation r);

struct ChainConfig {
    int generations = 20;
    std::size_t initial_human = 8000;
    std::size_t per_gen_total = 4000;
    double ratio = 0.0;
    std::size_t eval_sample = 250;
    int models_per_generation = 1;
    std::vector<std::string> generator_kinds{"resampler"};
    Rotation rotation = Rotation::mixed;
    std::vector<std::string> domains{"default"};
    std::uint64_t seed = 0;

    void validate() const;
    bool multi_domain() const noexcept { return domains.size() > 1; }
    std::size_t synthetic_per_generation() const;
    std::size_t human_per_generation() const { return per_gen_total - synthetic_per_generation(); }
    // Human records a chain consumes in total.
    std::size_t human_required() const;
};

// Sequential source of fresh human records over a seeded pre-shuffle. In
// multi-domain chains each domain draws from its own queue.
class HumanCorpus {
  public:
    HumanCorpus(std::vector<TextRecord> records, const std::vector<std::string>& domains, std::uint64_t seed);

    // n fresh records of `domain` (or of any domain when single-domain).
    std::vector<TextRecord> take(std::size_t n, int generation, const std::string& domain);
    std::size_t remaining(const std::string& domain) const;

  private:
    bool multi_;
    std::map<std::string, std::deque<TextRecord>> queues_;
};

// Even split of n over `parts`, remainder to the first parts.
std::vector<std::size_t> split_evenly(std::size_t n, std::size_t parts);

struct GenerationOutput {
    std::vector<TextRecord> generated; // synthetic records added to the pool
    std::size_t training_size = 0;
    std::vector<std::string> kinds;    // generator kind per model slot
    std::size_t human_added = 0;
    std::vector<Source> training_sources;
};

// One generation of the chain. `kinds` holds one generator kind per model
// slot (size models_per_generation).
GenerationOutput advance_generation(DataPool& pool, HumanCorpus& corpus, const GeneratorFactory& factory,
                                    const std::vector<std::string>& kinds, const ChainConfig& cfg, int g, Rng& rng);

struct GenerationEval {
    int generation = 0;
    std::string domain;
    bool skipped = false;      // empty batch
    std::size_t batch_size = 0;
    metrics::MetricReport report;
    std::vector<TextRecord> evaluated;
};

struct ChainTrace {
    ChainConfig config;
    std::vector<std::vector<std::string>> kinds; // per generation, per model slot
    std::vector<GenerationEval> evaluations;     // generation-major, then domain order
    std::vector<std::size_t> pool_sizes;
    std::vector<std::size_t> synthetic_counts;
    std::vector<std::size_t> training_sizes;

    std::vector<const GenerationEval*> for_domain(const std::string& domain) const;
};

struct ChainOptions {
    BatchEvaluator evaluator;     // defaults to evaluate_batch with no embeddings
    Annotator annotator;          // optional, runs on the evaluation sample only
    bool keep_evaluated = true;   // retain the evaluated records in the trace
    std::vector<std::vector<Source>>* training_sources = nullptr; // test hook: source tags of every training set
};

ChainTrace run_chain(const ChainConfig& cfg, std::vector<TextRecord> corpus, const GeneratorFactory& factory,
                     const ChainOptions& opts = {});

// Final / generation-0 value per metric. nullopt marks an undefined ratio
// (zero at generation 0, or a metric missing at the final generation).
std::map<std::string, std::optional<double>> relative_metrics(const ChainTrace& trace, const std::string& domain = "");

std::vector<TextRecord> build_mixed_cluster(const std::vector<std::pair<std::string, std::vector<TextRecord>>>& pure);

// Buckets (-inf,b0), [b0,b1), ..., [b_last,+inf).
std::vector<std::vector<TextRecord>> partition_by_score(const std::vector<TextRecord>& records, metrics::ScoreKey key,
                                                        const std::vector<double>& boundaries);

} // namespace clab
