#include "collapse_lab/clustering.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <climits>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "collapse_lab/errors.hpp"
#include "collapse_lab/spatial.hpp"

namespace clab::clustering {

int ClusterAssignment::num_clusters() const {
    int m = -1;
    for (int l : labels) m = std::max(m, l);
    return m + 1;
}

std::vector<std::size_t> ClusterAssignment::sizes() const {
    std::vector<std::size_t> s(static_cast<std::size_t>(num_clusters()), 0);
    for (int l : labels)
        if (l >= 0) ++s[static_cast<std::size_t>(l)];
    return s;
}

void densify(std::vector<int>& labels) {
    std::unordered_map<int, int> remap;
    for (int& l : labels) {
        if (l < 0) {
            l = kNoise;
            continue;
        }
        auto [it, fresh] = remap.try_emplace(l, static_cast<int>(remap.size()));
        l = it->second;
    }
}

namespace {

void check_points(const Eigen::MatrixXd& p, const char* who) {
    if (p.rows() < 1 || p.cols() < 1) throw InvalidInput(std::string(who) + ": empty point set");
    if (!p.allFinite()) throw InvalidInput(std::string(who) + ": non-finite coordinates");
}

double sq_dist(const Eigen::MatrixXd& p, Eigen::Index i, const Eigen::MatrixXd& c, Eigen::Index j) {
    return (p.row(i) - c.row(j)).squaredNorm();
}

std::vector<int> assign_nearest(const Eigen::MatrixXd& p, const Eigen::MatrixXd& centers) {
    std::vector<int> labels(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        int best = 0;
        double bd = sq_dist(p, i, centers, 0);
        for (Eigen::Index c = 1; c < centers.rows(); ++c) {
            const double d = sq_dist(p, i, centers, c);
            if (d < bd) {
                bd = d;
                best = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
    }
    return labels;
}

Eigen::MatrixXd kmeans_pp(const Eigen::MatrixXd& p, int k, Rng& rng) {
    const Eigen::Index n = p.rows();
    Eigen::MatrixXd centers(k, p.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = p.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(p, i, centers, 0);
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick;
        if (total > 0.0) {
            std::discrete_distribution<Eigen::Index> dd(d2.begin(), d2.end());
            pick = dd(rng);
        } else {
            pick = first(rng);
        }
        centers.row(c) = p.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(p, i, centers, c));
    }
    return centers;
}

} // namespace

ClusterAssignment kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter) {
    check_points(points, "kmeans");
    if (k < 1) throw InvalidInput("kmeans: k must be >= 1");
    if (k > points.rows()) throw InvalidInput("kmeans: k > n");
    Rng rng(seed);
    Eigen::MatrixXd centers = kmeans_pp(points, k, rng);
    std::vector<int> labels = assign_nearest(points, centers);
    for (int iter = 0; iter < max_iter; ++iter) {
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        auto next = assign_nearest(points, centers);
        if (next == labels) break;
        labels = std::move(next);
    }
    densify(labels);
    return {std::move(labels), "kmeans", {{"k", static_cast<double>(k)}}};
}

// GMM ---------------------------------------------------------------------------

namespace {

struct Component {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd chol_l; // lower Cholesky factor of cov
    double log_det = 0.0;
    double weight = 0.0;
};

void factorize(Component& c, double fallback_trace) {
    const Eigen::Index d = c.cov.rows();
    auto try_llt = [&]() {
        Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
        if (llt.info() != Eigen::Success) return false;
        Eigen::MatrixXd l = llt.matrixL();
        const double ld = 2.0 * l.diagonal().array().log().sum();
        if (!std::isfinite(ld) || l.diagonal().minCoeff() <= 1e-150) return false;
        c.chol_l = std::move(l);
        c.log_det = ld;
        return true;
    };
    if (try_llt()) return;
    double tr = c.cov.trace();
    if (!(tr > 0.0)) tr = fallback_trace;
    c.cov += 1e-6 * tr * Eigen::MatrixXd::Identity(d, d);
    if (!try_llt()) throw DegenerateInput("gmm_em: covariance collapse persists after regularization");
}

// log N(x | mean, cov) for every row.
void component_log_density(const Eigen::MatrixXd& p, const Component& c, Eigen::Ref<Eigen::VectorXd> out) {
    const Eigen::Index d = p.cols();
    const Eigen::MatrixXd centered = (p.rowwise() - c.mean.transpose()).transpose(); // d x n
    const Eigen::MatrixXd z = c.chol_l.triangularView<Eigen::Lower>().solve(centered);
    const double konst = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + c.log_det);
    out = (konst - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
}

double e_step(const Eigen::MatrixXd& p, const std::vector<Component>& comps, Eigen::MatrixXd& resp) {
    const Eigen::Index n = p.rows();
    const auto k = static_cast<Eigen::Index>(comps.size());
    resp.resize(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        component_log_density(p, comps[static_cast<std::size_t>(c)], resp.col(c));
        resp.col(c).array() += std::log(comps[static_cast<std::size_t>(c)].weight);
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = resp.row(i).maxCoeff();
        const double lse = m + std::log((resp.row(i).array() - m).exp().sum());
        ll += lse;
        resp.row(i) = (resp.row(i).array() - lse).exp();
    }
    return ll;
}

} // namespace

GmmResult gmm_em(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter, double tol) {
    check_points(points, "gmm_em");
    if (k < 1) throw InvalidInput("gmm_em: k must be >= 1");
    if (points.rows() < 4 * static_cast<Eigen::Index>(k)) throw InvalidInput("gmm_em needs n >= 4k");
    const Eigen::Index n = points.rows(), d = points.cols();
    const double nd = static_cast<double>(n);

    const Eigen::RowVectorXd gmean = points.colwise().mean();
    const double global_trace = std::max((points.rowwise() - gmean).squaredNorm() / nd, 1e-12);

    // Initialize from k-means hard labels.
    const auto init = kmeans(points, k, seed);
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) resp(i, init.labels[static_cast<std::size_t>(i)]) = 1.0;

    std::vector<Component> comps(static_cast<std::size_t>(k));
    auto m_step = [&]() {
        for (Eigen::Index c = 0; c < k; ++c) {
            auto& comp = comps[static_cast<std::size_t>(c)];
            const double nk = resp.col(c).sum();
            if (nk <= 1e-10 * nd) {
                // Starved component: keep previous parameters with a vanishing weight.
                comp.weight = 1e-10;
                if (comp.mean.size() == 0) {
                    comp.mean = gmean.transpose();
                    comp.cov = (global_trace / static_cast<double>(d)) * Eigen::MatrixXd::Identity(d, d);
                    factorize(comp, global_trace);
                }
                continue;
            }
            comp.weight = nk / nd;
            comp.mean = (points.transpose() * resp.col(c)) / nk;
            const Eigen::MatrixXd centered = points.rowwise() - comp.mean.transpose();
            comp.cov = (centered.transpose() * resp.col(c).asDiagonal() * centered) / nk;
            factorize(comp, global_trace);
        }
    };

    GmmResult res;
    m_step();
    double ll = e_step(points, comps, resp);
    res.log_likelihood.push_back(ll);
    for (int iter = 0; iter < max_iter; ++iter) {
        m_step();
        const double next = e_step(points, comps, resp);
        res.log_likelihood.push_back(next);
        const double gain = (next - ll) / nd;
        ll = next;
        if (gain < tol) break;
    }
    // Parameters must match the responsibilities used for the labels.
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg;
        resp.row(i).maxCoeff(&arg);
        labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    densify(labels);
    res.assignment = {std::move(labels), "gmm", {{"k", static_cast<double>(k)}}};
    for (const auto& c : comps) {
        res.means.push_back(c.mean);
        res.covariances.push_back(c.cov);
        res.weights.push_back(c.weight);
    }
    return res;
}

// DBSCAN ------------------------------------------------------------------------

ClusterAssignment dbscan(const Eigen::MatrixXd& points, double eps, int min_pts) {
    check_points(points, "dbscan");
    if (!(eps > 0.0)) throw InvalidInput("dbscan: eps must be > 0");
    if (min_pts < 1) throw InvalidInput("dbscan: min_pts must be >= 1");
    const auto n = static_cast<std::size_t>(points.rows());
    const double r2 = eps * eps;
    spatial::KdTree tree(points);

    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        core[i] = tree.radius(tree.row(i), r2).size() >= static_cast<std::size_t>(min_pts);

    constexpr int unassigned = INT_MIN;
    std::vector<int> labels(n, unassigned);
    int next = 0;
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || labels[i] != unassigned) continue;
        const int c = next++;
        labels[i] = c;
        queue.push_back(i);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            for (std::size_t q : tree.radius(tree.row(p), r2)) {
                if (labels[q] != unassigned) continue;
                labels[q] = c;
                if (core[q]) queue.push_back(q);
            }
        }
    }
    for (int& l : labels)
        if (l == unassigned) l = kNoise;
    return {std::move(labels), "dbscan", {{"eps", eps}, {"min_pts", static_cast<double>(min_pts)}}};
}

// Propagation -------------------------------------------------------------------

std::vector<int> propagate_labels(const Eigen::MatrixXd& sample_points, const std::vector<int>& sample_labels,
                                  const Eigen::MatrixXd& points, bool exclude_noise) {
    if (sample_points.rows() == 0) throw InvalidInput("propagate_labels: empty labeled sample");
    if (static_cast<Eigen::Index>(sample_labels.size()) != sample_points.rows())
        throw InvalidInput("propagate_labels: label count != sample size");
    if (sample_points.cols() != points.cols()) throw InvalidInput("propagate_labels: dimension mismatch");
    if (!sample_points.allFinite() || !points.allFinite()) throw InvalidInput("propagate_labels: non-finite coordinates");

    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < sample_labels.size(); ++i)
        if (!exclude_noise || sample_labels[i] != kNoise) keep.push_back(static_cast<Eigen::Index>(i));
    if (keep.empty()) throw InvalidInput("propagate_labels: every labeled point is noise");

    Eigen::MatrixXd ref(static_cast<Eigen::Index>(keep.size()), sample_points.cols());
    std::vector<long> rank(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        ref.row(static_cast<Eigen::Index>(i)) = sample_points.row(keep[i]);
        const int l = sample_labels[static_cast<std::size_t>(keep[i])];
        rank[i] = l == kNoise ? LONG_MAX : l; // noise loses ties
    }
    spatial::KdTree tree(ref);
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    Eigen::VectorXd q(points.cols());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        q = points.row(i).transpose();
        const auto nb = tree.nearest_ranked(q.data(), rank);
        out[static_cast<std::size_t>(i)] = sample_labels[static_cast<std::size_t>(keep[nb.index])];
    }
    return out;
}

// Merging -----------------------------------------------------------------------

MergeStrategy parse_merge_strategy(const std::string& s) {
    if (s == "uniform") return MergeStrategy::uniform;
    if (s == "farthest-first" || s == "farthest_first") return MergeStrategy::farthest_first;
    throw InvalidInput("unknown merge strategy '" + s + "'");
}

std::string to_string(MergeStrategy s) { return s == MergeStrategy::uniform ? "uniform" : "farthest-first"; }

MergeResult merge_clusters(const std::vector<ClusterCandidate>& clusters, std::size_t target_size,
                           MergeStrategy strategy, Rng& rng, std::optional<std::size_t> start) {
    if (clusters.empty()) throw InvalidInput("merge_clusters: no clusters");
    std::size_t total = 0;
    for (const auto& c : clusters) total += c.indices.size();
    if (total < target_size)
        throw InvalidInput("merge_clusters: total size " + std::to_string(total) + " below target " + std::to_string(target_size));
    if (start && *start >= clusters.size()) throw InvalidInput("merge_clusters: start out of range");

    MergeResult res;
    std::size_t size = 0;
    auto take = [&](std::size_t c) {
        res.merged.push_back(c);
        res.indices.insert(res.indices.end(), clusters[c].indices.begin(), clusters[c].indices.end());
        size += clusters[c].indices.size();
    };

    if (strategy == MergeStrategy::uniform) {
        auto order = sample_without_replacement(clusters.size(), clusters.size(), rng);
        if (start) {
            std::erase(order, *start);
            order.insert(order.begin(), *start);
        }
        for (std::size_t c : order) {
            take(c);
            if (size >= target_size) break;
        }
    } else {
        std::size_t first = 0;
        if (start) {
            first = *start;
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, clusters.size() - 1);
            first = pick(rng);
        }
        std::vector<char> used(clusters.size(), 0);
        used[first] = 1;
        take(first);
        Eigen::VectorXd centroid = clusters[first].centroid;
        double weight = static_cast<double>(clusters[first].indices.size());
        while (size < target_size) {
            std::size_t best = SIZE_MAX;
            double bd = -1.0;
            for (std::size_t c = 0; c < clusters.size(); ++c) {
                if (used[c]) continue;
                const double d = (clusters[c].centroid - centroid).squaredNorm();
                if (d > bd) {
                    bd = d;
                    best = c;
                }
            }
            used[best] = 1;
            take(best);
            const double w = static_cast<double>(clusters[best].indices.size());
            if (weight + w > 0.0) centroid = (centroid * weight + clusters[best].centroid * w) / (weight + w);
            weight += w;
        }
    }
    std::sort(res.indices.begin(), res.indices.end());
    return res;
}

// Suite -------------------------------------------------------------------------

std::map<std::string, double> MethodSpec::params() const {
    if (method == "dbscan") return {{"eps", eps}, {"min_pts", static_cast<double>(min_pts)}};
    return {{"k", static_cast<double>(k)}};
}

void ClusterSuiteConfig::validate() const {
    if (grid.empty()) throw InvalidConfig("cluster suite: empty method grid");
    for (const auto& m : grid) {
        if (m.method == "kmeans" || m.method == "gmm") {
            if (m.k < 1) throw InvalidConfig("cluster suite: " + m.method + " needs k >= 1");
        } else if (m.method == "dbscan") {
            if (!(m.eps > 0.0) || m.min_pts < 1) throw InvalidConfig("cluster suite: dbscan needs eps > 0 and min_pts >= 1");
        } else {
            throw InvalidConfig("cluster suite: unknown method '" + m.method + "'");
        }
    }
    if (exclude_noise_variants.empty()) throw InvalidConfig("cluster suite: no propagation variant");
    if (quota < 1) throw InvalidConfig("cluster suite: quota must be >= 1");
    if (final_count < 1) throw InvalidConfig("cluster suite: final_count must be >= 1");
    if (merge_strategies.empty()) throw InvalidConfig("cluster suite: no merge strategy");
    if (projection_sample_size < 1) throw InvalidConfig("cluster suite: projection_sample_size must be >= 1");
    if (min_cluster_fraction && !(*min_cluster_fraction > 0.0 && *min_cluster_fraction <= 1.0))
        throw InvalidConfig("cluster suite: min_cluster_fraction must lie in (0,1]");
}

std::size_t ClusterSuiteConfig::min_size_for(std::size_t n) const {
    if (min_cluster_fraction) return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(*min_cluster_fraction * static_cast<double>(n))));
    return std::max<std::size_t>(1, min_cluster_size);
}

std::vector<MethodSpec> ClusterSuiteConfig::default_grid() {
    // 20 + 20 + 20 methods, times two propagation variants = 120 clusterings.
    std::vector<MethodSpec> g;
    for (int k = 10; k <= 48; k += 2) g.push_back({"kmeans", k, 0.0, 0});
    for (int k = 10; k <= 48; k += 2) g.push_back({"gmm", k, 0.0, 0});
    for (double eps : {0.1, 0.2, 0.3, 0.5, 0.8})
        for (int mp : {10, 25, 50, 100}) g.push_back({"dbscan", 0, eps, mp});
    return g;
}

namespace {

ClusterAssignment run_method(const MethodSpec& m, const Eigen::MatrixXd& pts, std::uint64_t seed) {
    if (m.method == "kmeans") return kmeans(pts, m.k, seed);
    if (m.method == "gmm") return gmm_em(pts, m.k, seed).assignment;
    return dbscan(pts, m.eps, m.min_pts);
}

} // namespace

std::vector<ClusterSpec> build_cluster_suite(const Eigen::MatrixXd& points, const ClusterSuiteConfig& cfg, SuiteStats* stats) {
    cfg.validate();
    check_points(points, "build_cluster_suite");
    const auto n = static_cast<std::size_t>(points.rows());
    const std::size_t min_size = cfg.min_size_for(n);

    Rng sample_rng(derive_seed(cfg.seed, 0));
    auto sample = sample_without_replacement(n, std::min(cfg.projection_sample_size, n), sample_rng);
    std::sort(sample.begin(), sample.end());
    Eigen::MatrixXd sample_pts(static_cast<Eigen::Index>(sample.size()), points.cols());
    for (std::size_t i = 0; i < sample.size(); ++i) sample_pts.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(sample[i]));

    std::vector<ClusterSpec> candidates;
    std::size_t clusterings = 0;
    for (std::size_t mi = 0; mi < cfg.grid.size(); ++mi) {
        const auto& spec = cfg.grid[mi];
        ClusterAssignment sampled;
        try {
            sampled = run_method(spec, sample_pts, derive_seed(cfg.seed, 1, mi));
        } catch (const InvalidInput&) {
            continue; // e.g. k larger than the sample; the clustering simply does not exist
        }
        for (bool exclude_noise : cfg.exclude_noise_variants) {
            std::vector<int> labels;
            try {
                labels = propagate_labels(sample_pts, sampled.labels, points, exclude_noise);
            } catch (const InvalidInput&) {
                continue; // all-noise sample under exclude-noise
            }
            const std::size_t clustering_idx = clusterings++;
            const int c_count = *std::max_element(labels.begin(), labels.end()) + 1;
            std::vector<ClusterCandidate> clusters(static_cast<std::size_t>(std::max(c_count, 0)));
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] >= 0) clusters[static_cast<std::size_t>(labels[i])].indices.push_back(i);
            std::vector<std::size_t> order;
            for (std::size_t c = 0; c < clusters.size(); ++c) {
                if (clusters[c].indices.empty()) continue;
                Eigen::VectorXd centroid = Eigen::VectorXd::Zero(points.cols());
                for (std::size_t i : clusters[c].indices) centroid += points.row(static_cast<Eigen::Index>(i)).transpose();
                clusters[c].centroid = centroid / static_cast<double>(clusters[c].indices.size());
                order.push_back(c);
            }
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return clusters[a].indices.size() > clusters[b].indices.size();
            });

            auto base_params = spec.params();
            base_params["exclude_noise"] = exclude_noise ? 1.0 : 0.0;
            base_params["clustering"] = static_cast<double>(clustering_idx);

            std::size_t taken = 0;
            std::vector<ClusterCandidate> small;
            for (std::size_t c : order) {
                if (taken < cfg.quota && clusters[c].indices.size() >= min_size) {
                    ClusterSpec cs{0, spec.method, base_params, clusters[c].indices};
                    cs.params["source_label"] = static_cast<double>(c);
                    candidates.push_back(std::move(cs));
                    ++taken;
                } else if (clusters[c].indices.size() < min_size) {
                    small.push_back(clusters[c]);
                }
            }
            const MergeStrategy strategy = cfg.merge_strategies[clustering_idx % cfg.merge_strategies.size()];
            Rng merge_rng(derive_seed(cfg.seed, 2, clustering_idx));
            while (taken < cfg.quota && !small.empty()) {
                std::size_t total = 0;
                for (const auto& s : small) total += s.indices.size();
                if (total < min_size) break;
                auto merged = merge_clusters(small, min_size, strategy, merge_rng);
                ClusterSpec cs{0, spec.method, base_params, std::move(merged.indices)};
                cs.params["merged_count"] = static_cast<double>(merged.merged.size());
                cs.params["merge_farthest_first"] = strategy == MergeStrategy::farthest_first ? 1.0 : 0.0;
                candidates.push_back(std::move(cs));
                ++taken;
                std::sort(merged.merged.begin(), merged.merged.end(), std::greater<>());
                for (std::size_t pos : merged.merged) small.erase(small.begin() + static_cast<std::ptrdiff_t>(pos));
            }
        }
    }
    if (stats) *stats = {clusterings, candidates.size()};
    if (candidates.size() < cfg.final_count)
        throw ShortfallError(cfg.final_count, candidates.size(), "cluster suite produced too few candidates");

    Rng final_rng(derive_seed(cfg.seed, 3));
    auto pick = sample_without_replacement(candidates.size(), cfg.final_count, final_rng);
    std::sort(pick.begin(), pick.end());
    std::vector<ClusterSpec> out;
    out.reserve(pick.size());
    for (std::size_t i = 0; i < pick.size(); ++i) {
        auto cs = std::move(candidates[pick[i]]);
        cs.cluster_id = i;
        out.push_back(std::move(cs));
    }
    return out;
}

} // namespace clab::clustering
