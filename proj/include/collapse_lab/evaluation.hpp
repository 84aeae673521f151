#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "collapse_lab/metrics.hpp"
#include "collapse_lab/records.hpp"

namespace clab {

// Resolves texts to embedding rows by exact text match. Used to score
// semantic diversity of generated batches when generated texts are drawn
// from a corpus whose embeddings are known.
class EmbeddingLookup {
  public:
    EmbeddingLookup() = default;
    EmbeddingLookup(const std::vector<TextRecord>& records, metrics::EmbeddingMatrix matrix);

    std::optional<std::size_t> row_of(const std::string& text) const;
    // Rows for every record whose text resolves, in record order.
    Eigen::MatrixXd gather(const std::vector<TextRecord>& records, std::size_t* resolved = nullptr) const;
    const metrics::EmbeddingMatrix& matrix() const noexcept { return matrix_; }
    bool empty() const noexcept { return index_.empty(); }

  private:
    metrics::EmbeddingMatrix matrix_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Copies annotations onto generated records (judge, corpus lookup, ...).
using Annotator = std::function<void(std::vector<TextRecord>&)>;

// Annotator copying scores from a reference corpus by exact text match.
Annotator corpus_lookup_annotator(const std::vector<TextRecord>& corpus);

struct EvaluationOptions {
    int bleu_max_n = 4;
    std::size_t self_bleu_cap = 250;
    std::uint64_t seed = 0;
    const EmbeddingLookup* embeddings = nullptr;
    std::vector<int> knn_k;  // extra knn_cosine_diversity@k metrics when enough rows resolve
    bool lean_bins = true;   // lean_bin_* / lean_neutral / lean_nonpolitical when lean scores exist
};

// Metric suite for one evaluated batch. Always: distinct_texts,
// distinct_fraction, avg_length, and (when tokens exist) word_entropy, ttr,
// self_bleu@max_n=N. Optional: cosine_diversity, knn_cosine_diversity@k=K,
// quality, lean, positivity means, lean bins.
metrics::MetricReport evaluate_batch(const std::vector<TextRecord>& batch, const EvaluationOptions& opts);

using BatchEvaluator = std::function<metrics::MetricReport(const std::vector<TextRecord>&)>;

BatchEvaluator make_evaluator(EvaluationOptions opts);

} // namespace clab
