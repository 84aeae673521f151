#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "collapse_lab/records.hpp"

namespace clab {

enum class JudgeKind { quality, lean };
JudgeKind parse_judge_kind(const std::string& s);
std::string to_string(JudgeKind k);

// Prompt templates, byte for byte; "{text}" is replaced by the post.
extern const std::string_view kQualityPrompt;
extern const std::string_view kLeanPrompt;

std::string_view prompt_template(JudgeKind k);
std::string render_prompt(JudgeKind k, std::string_view text);

struct JudgeConfig {
    std::string endpoint;
    std::string path = "/v1/chat/completions";
    std::string model;
    int max_retries = 3;           // attempts per text = 1 + max_retries
    double timeout_seconds = 60.0;
    std::string cache_path;        // append-only JSONL; empty disables caching
    int concurrency = 4;           // max requests in flight
    double temperature = 0.0;
    std::string credential_env = "COLLAPSE_LAB_JUDGE_TOKEN";

    void validate() const;
};

struct Annotation {
    std::string text_hash;
    JudgeKind kind = JudgeKind::quality;
    int score = 0;
    std::string raw;
    std::string timestamp; // ISO-8601 UTC
    bool cached = false;
};

enum class JudgeFailure { none, parse, transport, protocol };

struct AnnotationOutcome {
    std::optional<Annotation> annotation;
    JudgeFailure failure = JudgeFailure::none;
    std::string message;
    int attempts = 0;

    bool ok() const noexcept { return annotation.has_value(); }
};

// Bare integer with optional surrounding whitespace; nullopt on anything else
// or when outside the kind's range.
std::optional<int> parse_score(JudgeKind k, std::string_view raw);

// One outcome per input text, in input order. Failures are per text; the
// batch always completes.
std::vector<AnnotationOutcome> annotate(const std::vector<std::string>& texts, JudgeKind kind, const JudgeConfig& cfg);
std::vector<AnnotationOutcome> annotate_quality(const std::vector<std::string>& texts, const JudgeConfig& cfg);
std::vector<AnnotationOutcome> annotate_lean(const std::vector<std::string>& texts, const JudgeConfig& cfg);

// Writes successful scores onto the records' annotations.
void apply_annotations(std::vector<TextRecord>& records, JudgeKind kind, const std::vector<AnnotationOutcome>& outcomes);

struct LeanPartitions {
    std::vector<TextRecord> left;  // lean < 50
    std::vector<TextRecord> right; // lean > 50
    std::size_t excluded = 0;      // exact 50, -1, or unscored
};
LeanPartitions partition_lean(const std::vector<TextRecord>& records);

// size * left_fraction records from `left`, the rest from `right`, shuffled.
std::vector<TextRecord> build_lean_mixture(const std::vector<TextRecord>& left, const std::vector<TextRecord>& right,
                                           double left_fraction, std::size_t size, std::uint64_t seed);

} // namespace clab
