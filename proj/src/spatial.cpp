#include "collapse_lab/spatial.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace clab::spatial {

KdTree::KdTree(const Eigen::MatrixXd& points, std::size_t leaf_size) : pts_(points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    order_.resize(static_cast<std::size_t>(pts_.rows()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;

    const Eigen::Index d = pts_.cols();
    int best_dim = 0;
    double best_spread = -1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        double lo = pts_(static_cast<Eigen::Index>(order_[begin]), k), hi = lo;
        for (std::uint32_t i = begin + 1; i < end; ++i) {
            const double v = pts_(static_cast<Eigen::Index>(order_[i]), k);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
            best_spread = hi - lo;
            best_dim = static_cast<int>(k);
        }
    }
    if (best_spread <= 0.0) return id; // all coincident: keep as a leaf

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                         return pts_(static_cast<Eigen::Index>(a), best_dim) < pts_(static_cast<Eigen::Index>(b), best_dim);
                     });
    const double split = pts_(static_cast<Eigen::Index>(order_[mid]), best_dim);
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].dim = best_dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<Neighbor> KdTree::knn(const double* q, std::size_t k, std::size_t exclude) const {
    std::priority_queue<Neighbor> heap; // max-heap: top is the current worst
    if (k == 0 || nodes_.empty()) return {};
    const Eigen::Index d = pts_.cols();

    auto visit = [&](auto&& self, std::int32_t id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.dim < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                if (idx == exclude) continue;
                Neighbor cand{squared_distance(q, row(idx), d), idx};
                if (heap.size() < k) {
                    heap.push(cand);
                } else if (cand < heap.top()) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        const double diff = q[n.dim] - n.split;
        const std::int32_t near = diff < 0.0 ? n.left : n.right;
        const std::int32_t far = diff < 0.0 ? n.right : n.left;
        self(self, near);
        if (heap.size() < k || diff * diff <= heap.top().dist2) self(self, far);
    };
    visit(visit, 0);

    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = heap.top();
        heap.pop();
    }
    return out;
}

Neighbor KdTree::nearest_ranked(const double* q, std::span<const long> rank) const {
    Neighbor best{std::numeric_limits<double>::infinity(), SIZE_MAX};
    long best_rank = 0;
    const Eigen::Index d = pts_.cols();
    auto better = [&](const Neighbor& c, long r) {
        if (best.index == SIZE_MAX) return true;
        if (c.dist2 != best.dist2) return c.dist2 < best.dist2;
        if (r != best_rank) return r < best_rank;
        return c.index < best.index;
    };
    auto visit = [&](auto&& self, std::int32_t id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.dim < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                Neighbor cand{squared_distance(q, row(idx), d), idx};
                if (better(cand, rank[idx])) {
                    best = cand;
                    best_rank = rank[idx];
                }
            }
            return;
        }
        const double diff = q[n.dim] - n.split;
        const std::int32_t near = diff < 0.0 ? n.left : n.right;
        const std::int32_t far = diff < 0.0 ? n.right : n.left;
        self(self, near);
        if (diff * diff <= best.dist2) self(self, far);
    };
    if (!nodes_.empty()) visit(visit, 0);
    return best;
}

std::vector<std::size_t> KdTree::radius(const double* q, double r2) const {
    std::vector<std::size_t> out;
    if (nodes_.empty()) return out;
    const Eigen::Index d = pts_.cols();
    auto visit = [&](auto&& self, std::int32_t id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.dim < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::size_t idx = order_[i];
                if (squared_distance(q, row(idx), d) <= r2) out.push_back(idx);
            }
            return;
        }
        const double diff = q[n.dim] - n.split;
        if (diff < 0.0 || diff * diff <= r2) self(self, n.left);
        if (diff >= 0.0 || diff * diff <= r2) self(self, n.right);
    };
    visit(visit, 0);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace clab::spatial
