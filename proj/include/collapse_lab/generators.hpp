#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "collapse_lab/http_chat.hpp"
#include "collapse_lab/random.hpp"
#include "collapse_lab/records.hpp"

namespace clab {

// A trainable text generator. Each chain generation constructs a fresh
// instance, trains it once, and asks it for an exact number of texts.
class GeneratorModel {
  public:
    virtual ~GeneratorModel() = default;
    virtual void train(std::span<const TextRecord> records) = 0;
    // Exactly n texts for the given domain tag (empty: no domain); deterministic
    // given the seed the instance was constructed with.
    virtual std::vector<std::string> generate(std::size_t n, const std::string& domain) = 0;
    virtual std::string kind() const = 0;
};

using GeneratorFactory = std::function<std::unique_ptr<GeneratorModel>(const std::string& kind, std::uint64_t seed)>;

// Stand-in for fine-tuning: "training" stores the texts, generation draws
// stored texts uniformly with replacement. With probability `smoothing` a
// drawn text loses one random token.
class ResamplerGenerator final : public GeneratorModel {
  public:
    ResamplerGenerator(double smoothing, std::uint64_t seed, std::string kind = "resampler");

    void train(std::span<const TextRecord> records) override;
    std::vector<std::string> generate(std::size_t n, const std::string& domain) override;
    std::string kind() const override { return kind_; }

  private:
    double smoothing_;
    Rng rng_;
    std::string kind_;
    bool trained_ = false;
    std::vector<std::string> texts_;
    std::map<std::string, std::vector<std::size_t>> by_domain_;
};

struct GeneratorEndpointConfig {
    std::string endpoint; // e.g. "http://127.0.0.1:8000"
    std::string path = "/v1/chat/completions";
    std::string model;
    double temperature = 1.5; // forwarded as-is
    double min_p = 0.2;       // forwarded as-is
    double timeout_seconds = 60.0;
    std::string prompt = "Write a new post.";
    std::map<std::string, std::string> domain_prompts; // per-domain instruction overrides
    std::string credential_env;                        // env var holding a bearer token, optional

    void validate() const;
};

// Adapter for a remote generator behind a chat-completion endpoint. Training
// is not forwarded; generation issues one request per text.
class ExternalGenerator final : public GeneratorModel {
  public:
    ExternalGenerator(GeneratorEndpointConfig cfg, std::uint64_t seed, std::string kind = "external");

    void train(std::span<const TextRecord> records) override;
    std::vector<std::string> generate(std::size_t n, const std::string& domain) override;
    std::string kind() const override { return kind_; }
    std::size_t requests_issued() const noexcept { return requests_; }

  private:
    GeneratorEndpointConfig cfg_;
    std::uint64_t seed_;
    std::string kind_;
    std::size_t requests_ = 0;
};

struct GeneratorSpec {
    std::string type = "resampler"; // "resampler" or "external"
    double smoothing = 0.0;
    GeneratorEndpointConfig endpoint;
};

// Factory over named generator specs; unknown kinds raise InvalidConfig.
GeneratorFactory make_generator_factory(std::map<std::string, GeneratorSpec> specs);

} // namespace clab
