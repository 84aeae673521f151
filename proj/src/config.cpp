#include "collapse_lab/config.hpp"

#include <filesystem>
#include <set>
#include <vector>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/hash.hpp"
#include "collapse_lab/io.hpp"

namespace clab::config {

using nlohmann::json;
namespace fs = std::filesystem;

void deep_merge(json& base, const json& overlay) {
    if (base.is_object() && overlay.is_object()) {
        for (const auto& [k, v] : overlay.items()) {
            if (base.contains(k)) deep_merge(base[k], v);
            else base[k] = v;
        }
        return;
    }
    base = overlay;
}

namespace {

json load_rec(const fs::path& path, std::vector<fs::path>& stack) {
    const fs::path canon = fs::weakly_canonical(path);
    for (const auto& p : stack)
        if (p == canon) throw InvalidConfig("config include cycle through " + canon.string());
    stack.push_back(canon);
    json j;
    try {
        j = json::parse(io::read_text_file(path.string()));
    } catch (const json::parse_error& e) {
        throw InvalidConfig(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidConfig(path.string() + ": top level must be an object");
    json merged = json::object();
    if (auto it = j.find("include"); it != j.end()) {
        std::vector<std::string> incs;
        if (it->is_string()) incs.push_back(it->get<std::string>());
        else if (it->is_array()) incs = it->get<std::vector<std::string>>();
        else throw InvalidConfig(path.string() + ": \"include\" must be a path or a list of paths");
        for (const auto& inc : incs) deep_merge(merged, load_rec(path.parent_path() / inc, stack));
        j.erase("include");
    }
    deep_merge(merged, j);
    stack.pop_back();
    return merged;
}

void check_keys(const json& j, const std::string& what, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw InvalidConfig(what + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw InvalidConfig(what + ": unknown key '" + k + "'");
}

template <class T>
void get_if(const json& j, const char* key, T& out, const std::string& what) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw InvalidConfig(what + "." + key + ": " + e.what());
        }
    }
}

} // namespace

json load(const std::string& path) {
    std::vector<fs::path> stack;
    return load_rec(path, stack);
}

std::string spec_hash(const json& spec) { return sha256_hex(spec.dump()); }

std::string resolve_path(const std::string& base_file, const std::string& p) {
    const fs::path pp(p);
    if (pp.is_absolute() || base_file.empty()) return p;
    return (fs::path(base_file).parent_path() / pp).lexically_normal().string();
}

toy::ToyConfig toy_config(const json& j) {
    check_keys(j, "toy", {"support_size", "ratio", "steps", "runs", "bias_period", "bias_strength", "overlap",
                          "accumulate", "prior_pseudocount", "seed"});
    toy::ToyConfig c;
    get_if(j, "support_size", c.support_size, "toy");
    get_if(j, "ratio", c.ratio, "toy");
    get_if(j, "steps", c.steps, "toy");
    get_if(j, "runs", c.runs, "toy");
    get_if(j, "bias_period", c.bias_period, "toy");
    get_if(j, "bias_strength", c.bias_strength, "toy");
    get_if(j, "overlap", c.overlap, "toy");
    get_if(j, "accumulate", c.accumulate, "toy");
    get_if(j, "prior_pseudocount", c.prior_pseudocount, "toy");
    get_if(j, "seed", c.seed, "toy");
    return c;
}

ChainConfig chain_config(const json& j) {
    check_keys(j, "chain", {"generations", "initial_human", "per_gen_total", "ratio", "eval_sample",
                            "models_per_generation", "generator_kinds", "rotation", "domains", "seed"});
    ChainConfig c;
    get_if(j, "generations", c.generations, "chain");
    get_if(j, "initial_human", c.initial_human, "chain");
    get_if(j, "per_gen_total", c.per_gen_total, "chain");
    get_if(j, "ratio", c.ratio, "chain");
    get_if(j, "eval_sample", c.eval_sample, "chain");
    get_if(j, "models_per_generation", c.models_per_generation, "chain");
    get_if(j, "generator_kinds", c.generator_kinds, "chain");
    get_if(j, "domains", c.domains, "chain");
    get_if(j, "seed", c.seed, "chain");
    if (j.contains("rotation")) c.rotation = parse_rotation(j["rotation"].get<std::string>());
    return c;
}

GeneratorEndpointConfig endpoint_config(const json& j) {
    check_keys(j, "generator endpoint", {"endpoint", "path", "model", "temperature", "min_p", "timeout_seconds",
                                         "prompt", "domain_prompts", "credential_env"});
    GeneratorEndpointConfig c;
    get_if(j, "endpoint", c.endpoint, "generator");
    get_if(j, "path", c.path, "generator");
    get_if(j, "model", c.model, "generator");
    get_if(j, "temperature", c.temperature, "generator");
    get_if(j, "min_p", c.min_p, "generator");
    get_if(j, "timeout_seconds", c.timeout_seconds, "generator");
    get_if(j, "prompt", c.prompt, "generator");
    get_if(j, "domain_prompts", c.domain_prompts, "generator");
    get_if(j, "credential_env", c.credential_env, "generator");
    return c;
}

std::map<std::string, GeneratorSpec> generator_specs(const json& j) {
    std::map<std::string, GeneratorSpec> out;
    if (j.is_null()) return out;
    if (!j.is_object()) throw InvalidConfig("generators must be an object keyed by kind");
    for (const auto& [name, g] : j.items()) {
        check_keys(g, "generators." + name, {"type", "smoothing", "endpoint"});
        GeneratorSpec s;
        get_if(g, "type", s.type, "generators." + name);
        get_if(g, "smoothing", s.smoothing, "generators." + name);
        if (g.contains("endpoint")) s.endpoint = endpoint_config(g["endpoint"]);
        out.emplace(name, std::move(s));
    }
    return out;
}

JudgeConfig judge_config(const json& j) {
    check_keys(j, "judge", {"endpoint", "path", "model", "max_retries", "timeout_seconds", "cache_path", "concurrency",
                            "temperature", "credential_env"});
    JudgeConfig c;
    get_if(j, "endpoint", c.endpoint, "judge");
    get_if(j, "path", c.path, "judge");
    get_if(j, "model", c.model, "judge");
    get_if(j, "max_retries", c.max_retries, "judge");
    get_if(j, "timeout_seconds", c.timeout_seconds, "judge");
    get_if(j, "cache_path", c.cache_path, "judge");
    get_if(j, "concurrency", c.concurrency, "judge");
    get_if(j, "temperature", c.temperature, "judge");
    get_if(j, "credential_env", c.credential_env, "judge");
    return c;
}

clustering::ClusterSuiteConfig cluster_suite_config(const json& j) {
    check_keys(j, "clustering", {"projection_sample_size", "grid", "exclude_noise_variants", "quota", "min_cluster_size",
                                 "min_cluster_fraction", "merge_strategies", "final_count", "seed"});
    clustering::ClusterSuiteConfig c;
    get_if(j, "projection_sample_size", c.projection_sample_size, "clustering");
    get_if(j, "exclude_noise_variants", c.exclude_noise_variants, "clustering");
    get_if(j, "quota", c.quota, "clustering");
    get_if(j, "min_cluster_size", c.min_cluster_size, "clustering");
    get_if(j, "final_count", c.final_count, "clustering");
    get_if(j, "seed", c.seed, "clustering");
    if (j.contains("min_cluster_fraction")) c.min_cluster_fraction = j["min_cluster_fraction"].get<double>();
    if (j.contains("merge_strategies")) {
        c.merge_strategies.clear();
        for (const auto& s : j["merge_strategies"]) c.merge_strategies.push_back(clustering::parse_merge_strategy(s.get<std::string>()));
    }
    if (j.contains("grid")) {
        for (const auto& m : j["grid"]) {
            check_keys(m, "clustering.grid[]", {"method", "k", "eps", "min_pts"});
            clustering::MethodSpec s;
            get_if(m, "method", s.method, "clustering.grid");
            get_if(m, "k", s.k, "clustering.grid");
            get_if(m, "eps", s.eps, "clustering.grid");
            get_if(m, "min_pts", s.min_pts, "clustering.grid");
            c.grid.push_back(s);
        }
    } else {
        c.grid = clustering::ClusterSuiteConfig::default_grid();
    }
    return c;
}

EvaluationOptions evaluation_options(const json& j) {
    EvaluationOptions o;
    if (j.is_null()) return o;
    check_keys(j, "evaluation", {"bleu_max_n", "self_bleu_cap", "knn_k", "lean_bins"});
    get_if(j, "bleu_max_n", o.bleu_max_n, "evaluation");
    get_if(j, "self_bleu_cap", o.self_bleu_cap, "evaluation");
    get_if(j, "knn_k", o.knn_k, "evaluation");
    get_if(j, "lean_bins", o.lean_bins, "evaluation");
    return o;
}

} // namespace clab::config
