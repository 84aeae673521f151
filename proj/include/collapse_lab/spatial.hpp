#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace clab::spatial {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double squared_distance(const double* a, const double* b, Eigen::Index d) noexcept {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

struct Neighbor {
    double dist2;
    std::size_t index;
    friend bool operator<(const Neighbor& a, const Neighbor& b) noexcept {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
};

// Exact k-d tree over the rows of a point matrix. Neighbor order is
// (squared distance, index) so results are deterministic under ties.
class KdTree {
  public:
    explicit KdTree(const Eigen::MatrixXd& points, std::size_t leaf_size = 16);

    std::size_t size() const noexcept { return static_cast<std::size_t>(pts_.rows()); }
    Eigen::Index dims() const noexcept { return pts_.cols(); }

    // k nearest rows to `q`, sorted ascending. `exclude` skips one row (the
    // query itself when querying from the indexed set).
    std::vector<Neighbor> knn(const double* q, std::size_t k, std::size_t exclude = SIZE_MAX) const;

    // Nearest row minimizing (dist2, rank[index], index).
    Neighbor nearest_ranked(const double* q, std::span<const long> rank) const;

    // All rows with squared distance <= r2, in ascending index order.
    std::vector<std::size_t> radius(const double* q, double r2) const;

    const double* row(std::size_t i) const noexcept { return pts_.data() + static_cast<Eigen::Index>(i) * pts_.cols(); }

  private:
    struct Node {
        std::uint32_t begin, end; // range in order_
        int dim = -1;             // -1 marks a leaf
        double split = 0.0;
        std::int32_t left = -1, right = -1;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    RowMatrix pts_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    std::size_t leaf_size_;
};

} // namespace clab::spatial
