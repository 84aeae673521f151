#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "collapse_lab/chain.hpp"
#include "collapse_lab/metrics.hpp"
#include "collapse_lab/regression.hpp"

namespace clab {

enum class ExperimentKind { toy, chain, cluster_regression, mixed_domain, lean };
ExperimentKind parse_experiment_kind(const std::string& s);
std::string to_string(ExperimentKind k);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::chain;
    nlohmann::json raw;      // merged config, includes resolved
    std::string source_path; // config file; relative paths resolve against it
    std::vector<double> ratios;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::string out_dir = "results";

    // Parses and checks everything that can be checked before execution:
    // kind, ratio range, referenced files exist.
    static ExperimentSpec from_json(const nlohmann::json& j, const std::string& source_path = "");
    static ExperimentSpec load(const std::string& path);
    std::string path(const std::string& key) const; // resolved path-valued key; InvalidConfig if missing
    std::string hash() const;
};

// One summary CSV (seed,generation,domain,metric,value) per dataset x ratio.
struct SummaryRef {
    std::string file; // relative to out_dir
    std::string dataset;
    double ratio = 0.0;
};

struct CellFailure {
    std::string cell;
    std::string error;
};

// What run_experiment leaves behind in out_dir: manifest.json plus the
// artifacts it lists.
struct ResultStore {
    std::string out_dir;
    std::string spec_hash;
    ExperimentKind kind = ExperimentKind::chain;
    std::size_t cells = 0;
    std::vector<CellFailure> failures;
    std::vector<std::string> artifacts; // relative to out_dir
    std::vector<SummaryRef> summaries;

    static ResultStore open(const std::string& out_dir);
};

// Runs the full grid with `jobs` cells in flight. Per-cell failures are
// recorded and do not stop the grid; artifacts are written after all cells
// finish, in grid order, so reruns are byte-identical.
ResultStore run_experiment(const ExperimentSpec& spec, int jobs = 1);

enum class PlotKind { evolution, interaction_absolute, interaction_relative, lean_evolution, lean_in_out, lean_stacked };
PlotKind parse_plot_kind(const std::string& s);
std::string to_string(PlotKind k);

// Tidy CSV, one row per plotted point.
std::string emit_plot_data(const ResultStore& store, PlotKind kind);

// Data properties of one human dataset, aligned with
// regression::property_names(). Embeddings and projection are optional; a
// property that cannot be computed raises InvalidInput naming it.
struct PropertyInputs {
    const metrics::EmbeddingMatrix* embeddings = nullptr; // rows aligned with `records`
    const metrics::Projection2D* projection = nullptr;    // rows aligned with `records`
    std::size_t sample_cap = 2000;                        // subsample for O(n^2) metrics
    std::uint64_t seed = 0;
};
std::vector<double> data_properties(const std::vector<TextRecord>& records, const PropertyInputs& in);

} // namespace clab
