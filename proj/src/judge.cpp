#include "collapse_lab/judge.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/hash.hpp"
#include "collapse_lab/http_chat.hpp"
#include "collapse_lab/random.hpp"

namespace clab {

const std::string_view kQualityPrompt =
    "On a scale of 0 to 100, evaluate the post.  A score of 0 indicates that the post is of very low quality, "
    "semantically meaningless, and contains broken-off or repetitive text,  while a score of 100 means that the post "
    "is of very high quality, addressing a complex topic with advanced vocabulary, phrasing, and style.\n"
    "\n"
    "Post:\n"
    "{text}\n"
    "\n"
    "Reply ONLY with the integer score (0-100). DO NOT reply with text.";

const std::string_view kLeanPrompt =
    "Score the following post on a continual scale from 0 (left-wing) to 100 (right-wing) \n"
    "where a score of 0 means \"The post reflects radical left-wing ideology\" \n"
    "and a score of 100 means \"The post reflects radical right-wing ideology\", \n"
    "and a score of 50 means \"The post reflects a neutral ideology\".\n"
    "Reply with -1 if the post is not political. \n"
    "Reply ONLY with the integer score (0-100 or -1). DO NOT reply with text.  \n"
    "Here is the text: {text}";

JudgeKind parse_judge_kind(const std::string& s) {
    if (s == "quality") return JudgeKind::quality;
    if (s == "lean") return JudgeKind::lean;
    throw InvalidConfig("unknown judge kind '" + s + "' (expected quality or lean)");
}

std::string to_string(JudgeKind k) { return k == JudgeKind::quality ? "quality" : "lean"; }

std::string_view prompt_template(JudgeKind k) { return k == JudgeKind::quality ? kQualityPrompt : kLeanPrompt; }

std::string render_prompt(JudgeKind k, std::string_view text) {
    const std::string_view tpl = prompt_template(k);
    const auto pos = tpl.find("{text}");
    std::string out;
    out.reserve(tpl.size() + text.size());
    out.append(tpl.substr(0, pos));
    out.append(text);
    out.append(tpl.substr(pos + 6));
    return out;
}

void JudgeConfig::validate() const {
    if (endpoint.empty()) throw InvalidConfig("judge endpoint address is empty");
    if (max_retries < 0) throw InvalidConfig("judge max_retries must be >= 0");
    if (concurrency < 1) throw InvalidConfig("judge concurrency must be >= 1");
    if (!(timeout_seconds > 0.0)) throw InvalidConfig("judge timeout must be > 0");
}

std::optional<int> parse_score(JudgeKind k, std::string_view raw) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!raw.empty() && ws(raw.front())) raw.remove_prefix(1);
    while (!raw.empty() && ws(raw.back())) raw.remove_suffix(1);
    if (raw.empty()) return std::nullopt;
    // from_chars accepts a leading '-' but no '+', which is what we want
    int v = 0;
    const auto [end, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || end != raw.data() + raw.size()) return std::nullopt;
    if (v >= 0 && v <= 100) return v;
    if (k == JudgeKind::lean && v == -1) return v;
    return std::nullopt;
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string cache_key(const std::string& template_hash, const std::string& text_hash, const std::string& model) {
    return template_hash + ":" + text_hash + ":" + model;
}

class JudgeCache {
  public:
    explicit JudgeCache(std::string path) : path_(std::move(path)) {
        if (path_.empty()) return;
        const auto parent = std::filesystem::path(path_).parent_path();
        std::error_code ec;
        if (!parent.empty()) std::filesystem::create_directories(parent, ec);
        if (!std::ofstream(path_, std::ios::app)) throw InvalidInput("cannot append to judge cache " + path_);
        repair_tail();
        std::ifstream in(path_);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                Annotation a;
                a.text_hash = j.at("text_hash").get<std::string>();
                a.kind = parse_judge_kind(j.at("kind").get<std::string>());
                a.score = j.at("score").get<int>();
                a.raw = j.value("raw", "");
                a.timestamp = j.value("timestamp", "");
                a.cached = true;
                entries_[j.at("key").get<std::string>()] = std::move(a);
            } catch (const std::exception& e) {
                throw InvalidInput("judge cache " + path_ + " line " + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::optional<Annotation> find(const std::string& key) const {
        std::lock_guard lock(mu_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
        return std::nullopt;
    }

    void put(const std::string& key, const std::string& model, const Annotation& a) {
        std::lock_guard lock(mu_);
        entries_[key] = a;
        entries_[key].cached = true;
        if (path_.empty()) return;
        nlohmann::json j = {{"key", key},     {"text_hash", a.text_hash}, {"kind", to_string(a.kind)}, {"score", a.score},
                            {"raw", a.raw},   {"model", model},           {"timestamp", a.timestamp}};
        std::ofstream out(path_, std::ios::app);
        if (!out) throw InvalidInput("cannot append to judge cache " + path_);
        out << j.dump() << '\n';
    }

  private:
    // An interrupted run can leave a partial last line. Drop it, or terminate
    // it when it happens to be complete, so later appends start on a fresh line.
    void repair_tail() const {
        std::string body;
        {
            std::ifstream in(path_, std::ios::binary);
            body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        if (body.empty() || body.back() == '\n') return;
        const auto cut = body.rfind('\n');
        const std::size_t start = cut == std::string::npos ? 0 : cut + 1;
        if (nlohmann::json::accept(body.substr(start))) {
            std::ofstream(path_, std::ios::app) << '\n';
            return;
        }
        std::filesystem::resize_file(path_, start);
    }

    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Annotation> entries_;
};

AnnotationOutcome query(const std::string& text, const std::string& text_hash, JudgeKind kind, const JudgeConfig& cfg,
                        const http::Endpoint& ep) {
    AnnotationOutcome out;
    const nlohmann::json body = {
        {"model", cfg.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", render_prompt(kind, text)}}})},
        {"temperature", cfg.temperature},
    };
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        ++out.attempts;
        std::string raw;
        try {
            raw = http::post_chat(ep, body);
        } catch (const TransportError& e) {
            out.failure = JudgeFailure::transport;
            out.message = e.what();
            continue;
        } catch (const ProtocolError& e) {
            out.failure = JudgeFailure::protocol;
            out.message = e.what();
            continue;
        }
        if (auto score = parse_score(kind, raw)) {
            out.annotation = Annotation{text_hash, kind, *score, raw, utc_now(), false};
            out.failure = JudgeFailure::none;
            out.message.clear();
            return out;
        }
        out.failure = JudgeFailure::parse;
        out.message = "unparseable " + to_string(kind) + " score: '" + raw.substr(0, 80) + "'";
    }
    return out;
}

} // namespace

std::vector<AnnotationOutcome> annotate(const std::vector<std::string>& texts, JudgeKind kind, const JudgeConfig& cfg) {
    if (texts.empty()) throw InvalidInput("annotate: no texts");
    cfg.validate();
    JudgeCache cache(cfg.cache_path);
    const std::string template_hash = sha256_hex(prompt_template(kind));
    const http::Endpoint ep{cfg.endpoint, cfg.path, cfg.timeout_seconds, http::token_from_env(cfg.credential_env)};

    std::vector<AnnotationOutcome> results(texts.size());
    std::vector<std::string> hashes(texts.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        hashes[i] = sha256_hex(texts[i]);
        if (auto hit = cache.find(cache_key(template_hash, hashes[i], cfg.model)); hit && hit->kind == kind)
            results[i].annotation = std::move(hit);
        else
            pending.push_back(i);
    }

    std::atomic<std::size_t> next{0};
    std::mutex failed_mu;
    std::exception_ptr failed;
    auto worker = [&] {
        try {
            for (std::size_t j; (j = next.fetch_add(1)) < pending.size();) {
                const std::size_t i = pending[j];
                results[i] = query(texts[i], hashes[i], kind, cfg, ep);
                if (results[i].ok()) cache.put(cache_key(template_hash, hashes[i], cfg.model), cfg.model, *results[i].annotation);
            }
        } catch (...) {
            next = pending.size(); // stop handing out work
            std::lock_guard lock(failed_mu);
            if (!failed) failed = std::current_exception();
        }
    };
    const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(cfg.concurrency), pending.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < width; ++t) pool.emplace_back(worker);
    if (width > 0) worker();
    for (auto& t : pool) t.join();
    if (failed) std::rethrow_exception(failed);
    return results;
}

std::vector<AnnotationOutcome> annotate_quality(const std::vector<std::string>& texts, const JudgeConfig& cfg) {
    return annotate(texts, JudgeKind::quality, cfg);
}

std::vector<AnnotationOutcome> annotate_lean(const std::vector<std::string>& texts, const JudgeConfig& cfg) {
    return annotate(texts, JudgeKind::lean, cfg);
}

void apply_annotations(std::vector<TextRecord>& records, JudgeKind kind, const std::vector<AnnotationOutcome>& outcomes) {
    if (records.size() != outcomes.size()) throw InvalidInput("apply_annotations: size mismatch");
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!outcomes[i].ok()) continue;
        (kind == JudgeKind::quality ? records[i].annotations.quality : records[i].annotations.lean) =
            outcomes[i].annotation->score;
    }
}

LeanPartitions partition_lean(const std::vector<TextRecord>& records) {
    LeanPartitions p;
    for (const auto& r : records) {
        const auto& lean = r.annotations.lean;
        if (lean && *lean >= 0 && *lean < 50) p.left.push_back(r);
        else if (lean && *lean > 50) p.right.push_back(r);
        else ++p.excluded;
    }
    return p;
}

std::vector<TextRecord> build_lean_mixture(const std::vector<TextRecord>& left, const std::vector<TextRecord>& right,
                                           double left_fraction, std::size_t size, std::uint64_t seed) {
    static constexpr double allowed[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    if (std::none_of(std::begin(allowed), std::end(allowed), [&](double a) { return std::abs(a - left_fraction) < 1e-12; }))
        throw InvalidInput("left_fraction must be one of 0, 0.25, 0.5, 0.75, 1");
    const auto n_left = static_cast<std::size_t>(std::llround(static_cast<double>(size) * left_fraction));
    const std::size_t n_right = size - n_left;
    if (left.size() < n_left) throw ShortfallError(n_left, left.size(), "left-wing partition too small");
    if (right.size() < n_right) throw ShortfallError(n_right, right.size(), "right-wing partition too small");

    std::vector<TextRecord> out;
    out.reserve(size);
    Rng lrng(derive_seed(seed, 0)), rrng(derive_seed(seed, 1)), srng(derive_seed(seed, 2));
    for (std::size_t i : sample_without_replacement(left.size(), n_left, lrng)) out.push_back(left[i]);
    for (std::size_t i : sample_without_replacement(right.size(), n_right, rrng)) out.push_back(right[i]);
    std::shuffle(out.begin(), out.end(), srng);
    return out;
}

} // namespace clab
