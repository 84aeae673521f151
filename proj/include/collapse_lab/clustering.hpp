#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "collapse_lab/random.hpp"

namespace clab::clustering {

constexpr int kNoise = -1;

struct ClusterAssignment {
    std::vector<int> labels; // dense 0..C-1, kNoise for noise
    std::string method;
    std::map<std::string, double> params;

    int num_clusters() const;
    std::vector<std::size_t> sizes() const; // indexed by label
};

// Relabels to dense 0..C-1 ordered by first occurrence; noise stays -1.
void densify(std::vector<int>& labels);

ClusterAssignment kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter = 300);

struct GmmResult {
    ClusterAssignment assignment;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    std::vector<double> weights;
    std::vector<double> log_likelihood; // one entry per EM iteration, starting at the initialization
};

GmmResult gmm_em(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter = 300, double tol = 1e-6);

// Neighborhoods include the point itself (a point with min_pts-1 neighbors
// within eps is core). Clusters are numbered by their lowest-index core
// point; a border point joins the lowest-numbered adjacent cluster.
ClusterAssignment dbscan(const Eigen::MatrixXd& points, double eps, int min_pts);

// 1-NN label transfer from a labeled sample to every point. Ties go to the
// lowest label, then the lowest sample index.
std::vector<int> propagate_labels(const Eigen::MatrixXd& sample_points, const std::vector<int>& sample_labels,
                                  const Eigen::MatrixXd& points, bool exclude_noise);

struct ClusterCandidate {
    std::vector<std::size_t> indices;
    Eigen::VectorXd centroid;
};

enum class MergeStrategy { uniform, farthest_first };
MergeStrategy parse_merge_strategy(const std::string& s);
std::string to_string(MergeStrategy s);

struct MergeResult {
    std::vector<std::size_t> indices;
    std::vector<std::size_t> merged; // candidate positions in merge order
};

// Merges clusters until the union reaches target_size. farthest_first starts
// from `start` (or a seeded pick) and repeatedly adds the cluster whose
// centroid is farthest from the running size-weighted centroid.
MergeResult merge_clusters(const std::vector<ClusterCandidate>& clusters, std::size_t target_size,
                           MergeStrategy strategy, Rng& rng, std::optional<std::size_t> start = std::nullopt);

struct MethodSpec {
    std::string method; // "kmeans", "gmm", "dbscan"
    int k = 0;
    double eps = 0.0;
    int min_pts = 0;

    std::map<std::string, double> params() const;
};

struct ClusterSuiteConfig {
    std::size_t projection_sample_size = 90000;
    std::vector<MethodSpec> grid;
    std::vector<bool> exclude_noise_variants = {false, true};
    std::size_t quota = 10;
    std::size_t min_cluster_size = 60000;
    std::optional<double> min_cluster_fraction; // overrides min_cluster_size as ceil(fraction * n)
    std::vector<MergeStrategy> merge_strategies = {MergeStrategy::uniform, MergeStrategy::farthest_first};
    std::size_t final_count = 200;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t min_size_for(std::size_t n) const;
    static std::vector<MethodSpec> default_grid();
};

struct ClusterSpec {
    std::size_t cluster_id = 0;
    std::string method;
    std::map<std::string, double> params; // method hyperparameters plus propagation/merge provenance
    std::vector<std::size_t> record_indices;
};

struct SuiteStats {
    std::size_t clusterings = 0;
    std::size_t candidates = 0;
};

std::vector<ClusterSpec> build_cluster_suite(const Eigen::MatrixXd& points, const ClusterSuiteConfig& cfg,
                                             SuiteStats* stats = nullptr);

} // namespace clab::clustering
