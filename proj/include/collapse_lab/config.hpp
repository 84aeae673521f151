#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "collapse_lab/chain.hpp"
#include "collapse_lab/clustering.hpp"
#include "collapse_lab/evaluation.hpp"
#include "collapse_lab/generators.hpp"
#include "collapse_lab/judge.hpp"
#include "collapse_lab/toy_model.hpp"

namespace clab::config {

// Loads a JSON config. An "include" key (string or list of paths, relative to
// the including file) pulls in shared sub-configs; they are deep-merged in
// order and the including file's own keys win.
nlohmann::json load(const std::string& path);

// Objects merge key by key; anything else in `overlay` replaces `base`.
void deep_merge(nlohmann::json& base, const nlohmann::json& overlay);

// SHA-256 of the canonical serialization (keys sorted, no whitespace), so
// configs differing only in key order hash identically.
std::string spec_hash(const nlohmann::json& spec);

// Typed views. Unknown keys are rejected so typos do not silently fall back
// to defaults.
toy::ToyConfig toy_config(const nlohmann::json& j);
ChainConfig chain_config(const nlohmann::json& j);
std::map<std::string, GeneratorSpec> generator_specs(const nlohmann::json& j);
GeneratorEndpointConfig endpoint_config(const nlohmann::json& j);
JudgeConfig judge_config(const nlohmann::json& j);
clustering::ClusterSuiteConfig cluster_suite_config(const nlohmann::json& j);
EvaluationOptions evaluation_options(const nlohmann::json& j);

// Resolves `p` against the directory of the config file that named it.
std::string resolve_path(const std::string& base_file, const std::string& p);

} // namespace clab::config
