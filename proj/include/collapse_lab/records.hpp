#pragma once

#include <optional>
#include <string>
#include <vector>

namespace clab {

enum class Source { human, synthetic };

struct Annotations {
    std::optional<int> quality;       // 0..100
    std::optional<int> lean;          // -1 (non-political) or 0..100
    std::optional<double> positivity; // -1.0..1.0
};

struct TextRecord {
    std::string text;
    Source source = Source::human;
    int generation = -1; // -1 = original human corpus
    std::optional<std::string> domain;
    Annotations annotations;
    std::optional<std::size_t> embedding_id; // row in an EmbeddingMatrix
};

inline TextRecord human_record(std::string text, std::optional<std::string> domain = std::nullopt) {
    TextRecord r;
    r.text = std::move(text);
    r.domain = std::move(domain);
    return r;
}

std::vector<std::string> texts_of(const std::vector<TextRecord>& records);

} // namespace clab
