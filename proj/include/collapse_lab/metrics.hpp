#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clab {
struct TextRecord;
}

namespace clab::metrics {

// n x d embeddings, one row per text. Row ids are optional and only used for
// alignment with records on ingestion.
struct EmbeddingMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> ids;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }
    void validate() const;
};

// n x 2 planar projection (UMAP from outside, or pca_2d).
using Projection2D = Eigen::Matrix<double, Eigen::Dynamic, 2>;

// Metric name -> value. Names carry their parameters, e.g.
// "knn_cosine_diversity@k=50" or "self_bleu@max_n=4".
struct MetricReport {
    std::map<std::string, double> values;
    std::size_t sample_size = 0;
    bool undersized = false; // evaluated fewer texts than requested

    bool has(const std::string& name) const { return values.count(name) != 0; }
};

enum class BleuSmoothing { none, add_one };

// Semantic diversity --------------------------------------------------------

double cosine_diversity(const Eigen::MatrixXd& e);
double knn_cosine_diversity(const Eigen::MatrixXd& e, int k);

// Lexical diversity ---------------------------------------------------------

double bleu(std::span<const std::string> candidate, std::span<const std::vector<std::string>> references,
            int max_n = 4, BleuSmoothing smoothing = BleuSmoothing::add_one);

struct SelfBleuResult {
    double value = 0.0;
    std::size_t texts_used = 0;
};

// Mean BLEU of each text against all others. High value = low lexical
// diversity. Batches above `max_texts` are subsampled (seeded).
SelfBleuResult self_bleu(std::span<const std::string> texts, int max_n = 4,
                         BleuSmoothing smoothing = BleuSmoothing::add_one, std::size_t max_texts = 250,
                         std::uint64_t seed = 0);

double word_entropy(std::span<const std::string> texts);

struct TtrResult {
    double value = 0.0;
    std::size_t excluded = 0; // texts with no token in their 200-character prefix
};
TtrResult type_token_ratio(std::span<const std::string> texts, std::size_t prefix_chars = 200);

double avg_text_length(std::span<const std::string> texts);

// Projection-space metrics --------------------------------------------------

// Kozachenko-Leonenko differential entropy in nats (2D ball volume form).
double kl_entropy(const Projection2D& p, int k, std::uint64_t jitter_seed = 0);

struct GaussianityResult {
    double aic = 0.0;
    double aic_per_point = 0.0;
    double log_likelihood = 0.0;
    Eigen::Vector2d mean;
    Eigen::Matrix2d covariance; // maximum likelihood (divides by n)
};
GaussianityResult gaussianity_aic(const Projection2D& p);

Projection2D pca_2d(const Eigen::MatrixXd& e);

// Score aggregation ---------------------------------------------------------

enum class ScoreKey { quality, lean, positivity };
ScoreKey parse_score_key(const std::string& s);
std::string to_string(ScoreKey k);

struct ScoreAggregate {
    std::optional<double> mean;    // empty when only non-political lean scores exist
    std::size_t count = 0;         // records contributing to the mean
    std::size_t non_political = 0; // lean only: records scored -1
    std::vector<double> bin_edges; // 10 equal-width bins over the key's range
    std::vector<std::size_t> histogram;
};
ScoreAggregate aggregate_scores(std::span<const TextRecord> records, ScoreKey key);

struct LeanBins {
    std::vector<double> proportions; // over political scores; sums to 1 when any exist
    double neutral_fraction = 0.0;   // exact 50, over political scores
    double non_political_fraction = 0.0; // -1, over all scores
    std::size_t political = 0;
    std::size_t total = 0;
};
LeanBins lean_bins(std::span<const double> scores, int bins = 8);

} // namespace clab::metrics
