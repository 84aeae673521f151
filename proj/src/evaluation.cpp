#include "collapse_lab/evaluation.hpp"

#include <memory>
#include <unordered_set>

#include "collapse_lab/errors.hpp"

namespace clab {

EmbeddingLookup::EmbeddingLookup(const std::vector<TextRecord>& records, metrics::EmbeddingMatrix matrix)
    : matrix_(std::move(matrix)) {
    matrix_.validate();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t row = records[i].embedding_id.value_or(i);
        if (static_cast<Eigen::Index>(row) >= matrix_.rows())
            throw InvalidInput("record " + std::to_string(i) + " refers to embedding row " + std::to_string(row) +
                               " beyond the matrix");
        index_.try_emplace(records[i].text, row);
    }
}

std::optional<std::size_t> EmbeddingLookup::row_of(const std::string& text) const {
    if (auto it = index_.find(text); it != index_.end()) return it->second;
    return std::nullopt;
}

Eigen::MatrixXd EmbeddingLookup::gather(const std::vector<TextRecord>& records, std::size_t* resolved) const {
    std::vector<std::size_t> rows;
    for (const auto& r : records)
        if (auto row = row_of(r.text)) rows.push_back(*row);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), matrix_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = matrix_.values.row(static_cast<Eigen::Index>(rows[i]));
    if (resolved) *resolved = rows.size();
    return out;
}

Annotator corpus_lookup_annotator(const std::vector<TextRecord>& corpus) {
    auto table = std::make_shared<std::unordered_map<std::string, Annotations>>();
    for (const auto& r : corpus) table->try_emplace(r.text, r.annotations);
    return [table](std::vector<TextRecord>& batch) {
        for (auto& r : batch)
            if (auto it = table->find(r.text); it != table->end()) r.annotations = it->second;
    };
}

metrics::MetricReport evaluate_batch(const std::vector<TextRecord>& batch, const EvaluationOptions& opts) {
    if (batch.empty()) throw InvalidInput("evaluate_batch: empty batch");
    metrics::MetricReport rep;
    rep.sample_size = batch.size();
    const auto texts = texts_of(batch);

    std::unordered_set<std::string> distinct(texts.begin(), texts.end());
    rep.values["distinct_texts"] = static_cast<double>(distinct.size());
    rep.values["distinct_fraction"] = static_cast<double>(distinct.size()) / static_cast<double>(texts.size());
    rep.values["avg_length"] = metrics::avg_text_length(texts);

    try {
        rep.values["word_entropy"] = metrics::word_entropy(texts);
        rep.values["ttr"] = metrics::type_token_ratio(texts).value;
        if (texts.size() >= 2) {
            const auto sb = metrics::self_bleu(texts, opts.bleu_max_n, metrics::BleuSmoothing::add_one, opts.self_bleu_cap, opts.seed);
            rep.values["self_bleu@max_n=" + std::to_string(opts.bleu_max_n)] = sb.value;
        }
    } catch (const InvalidInput&) {
        // batch without any token: lexical metrics are undefined and omitted
    }

    if (opts.embeddings && !opts.embeddings->empty()) {
        std::size_t resolved = 0;
        const Eigen::MatrixXd e = opts.embeddings->gather(batch, &resolved);
        if (resolved >= 2) {
            rep.values["cosine_diversity"] = metrics::cosine_diversity(e);
            for (int k : opts.knn_k)
                if (static_cast<Eigen::Index>(k) < e.rows())
                    rep.values["knn_cosine_diversity@k=" + std::to_string(k)] = metrics::knn_cosine_diversity(e, k);
        }
        rep.values["embedded_fraction"] = static_cast<double>(resolved) / static_cast<double>(batch.size());
    }

    for (auto key : {metrics::ScoreKey::quality, metrics::ScoreKey::lean, metrics::ScoreKey::positivity}) {
        try {
            const auto agg = metrics::aggregate_scores(batch, key);
            if (agg.mean) rep.values[metrics::to_string(key)] = *agg.mean;
        } catch (const InvalidInput&) {
        }
    }

    if (opts.lean_bins) {
        std::vector<double> lean;
        for (const auto& r : batch)
            if (r.annotations.lean) lean.push_back(static_cast<double>(*r.annotations.lean));
        if (!lean.empty()) {
            const auto lb = metrics::lean_bins(lean);
            for (std::size_t b = 0; b < lb.proportions.size(); ++b) rep.values["lean_bin_" + std::to_string(b)] = lb.proportions[b];
            rep.values["lean_neutral"] = lb.neutral_fraction;
            rep.values["lean_nonpolitical"] = lb.non_political_fraction;
        }
    }
    return rep;
}

BatchEvaluator make_evaluator(EvaluationOptions opts) {
    return [opts](const std::vector<TextRecord>& batch) { return evaluate_batch(batch, opts); };
}

} // namespace clab
