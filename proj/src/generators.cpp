#include "collapse_lab/generators.hpp"

#include <sstream>

#include "collapse_lab/errors.hpp"

namespace clab {

ResamplerGenerator::ResamplerGenerator(double smoothing, std::uint64_t seed, std::string kind)
    : smoothing_(smoothing), rng_(seed), kind_(std::move(kind)) {
    if (!(smoothing >= 0.0 && smoothing <= 1.0)) throw InvalidConfig("resampler smoothing must lie in [0,1]");
}

void ResamplerGenerator::train(std::span<const TextRecord> records) {
    texts_.clear();
    by_domain_.clear();
    texts_.reserve(records.size());
    for (const auto& r : records) {
        if (r.domain) by_domain_[*r.domain].push_back(texts_.size());
        texts_.push_back(r.text);
    }
    trained_ = true;
}

namespace {

std::string drop_one_token(const std::string& text, Rng& rng) {
    std::istringstream in(text);
    std::vector<std::string> toks;
    for (std::string t; in >> t;) toks.push_back(std::move(t));
    if (toks.size() < 2) return text;
    std::uniform_int_distribution<std::size_t> pick(0, toks.size() - 1);
    toks.erase(toks.begin() + static_cast<std::ptrdiff_t>(pick(rng)));
    std::string out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (i) out.push_back(' ');
        out += toks[i];
    }
    return out;
}

} // namespace

std::vector<std::string> ResamplerGenerator::generate(std::size_t n, const std::string& domain) {
    if (!trained_) throw UsageError("resampler: generate() called before train()");
    std::vector<std::string> out;
    if (n == 0) return out;
    if (texts_.empty()) throw UsageError("resampler: trained on an empty set");
    const std::vector<std::size_t>* pool = nullptr;
    if (auto it = by_domain_.find(domain); !domain.empty() && it != by_domain_.end() && !it->second.empty())
        pool = &it->second;
    const std::size_t m = pool ? pool->size() : texts_.size();
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::bernoulli_distribution perturb(smoothing_);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pick(rng_);
        const std::string& t = texts_[pool ? (*pool)[j] : j];
        out.push_back(smoothing_ > 0.0 && perturb(rng_) ? drop_one_token(t, rng_) : t);
    }
    return out;
}

void GeneratorEndpointConfig::validate() const {
    if (endpoint.empty()) throw InvalidConfig("generator endpoint address is empty");
    if (!(temperature > 0.0)) throw InvalidConfig("generator temperature must be > 0");
    if (!(timeout_seconds > 0.0)) throw InvalidConfig("generator timeout must be > 0");
}

ExternalGenerator::ExternalGenerator(GeneratorEndpointConfig cfg, std::uint64_t seed, std::string kind)
    : cfg_(std::move(cfg)), seed_(seed), kind_(std::move(kind)) {
    cfg_.validate();
}

void ExternalGenerator::train(std::span<const TextRecord>) {}

std::vector<std::string> ExternalGenerator::generate(std::size_t n, const std::string& domain) {
    std::vector<std::string> out;
    if (n == 0) return out;
    http::Endpoint ep{cfg_.endpoint, cfg_.path, cfg_.timeout_seconds, http::token_from_env(cfg_.credential_env)};
    std::string prompt = cfg_.prompt;
    if (auto it = cfg_.domain_prompts.find(domain); it != cfg_.domain_prompts.end()) prompt = it->second;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        nlohmann::json body = {
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", cfg_.temperature},
            {"min_p", cfg_.min_p},
            {"seed", derive_seed(seed_, i) >> 1},
        };
        ++requests_;
        out.push_back(http::post_chat(ep, body));
    }
    return out;
}

GeneratorFactory make_generator_factory(std::map<std::string, GeneratorSpec> specs) {
    if (specs.empty()) specs.emplace("resampler", GeneratorSpec{});
    for (auto& [name, s] : specs) {
        if (s.type == "external") s.endpoint.validate();
        else if (s.type != "resampler") throw InvalidConfig("generator '" + name + "': unknown type '" + s.type + "'");
    }
    return [specs = std::move(specs)](const std::string& kind, std::uint64_t seed) -> std::unique_ptr<GeneratorModel> {
        auto it = specs.find(kind);
        if (it == specs.end()) throw InvalidConfig("unknown generator kind '" + kind + "'");
        if (it->second.type == "external") return std::make_unique<ExternalGenerator>(it->second.endpoint, seed, kind);
        return std::make_unique<ResamplerGenerator>(it->second.smoothing, seed, kind);
    };
}

} // namespace clab
