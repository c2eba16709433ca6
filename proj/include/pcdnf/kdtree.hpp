#pragma once

#include "pcdnf/common.hpp"

#include <vector>

namespace pcdnf {

// Exact 3-d kd-tree. Nearest-neighbor order is (squared distance, index)
// lexicographic, so queries are fully deterministic under distance ties.
class KdTree3 {
public:
    explicit KdTree3(const MatX3& pts);

    int size() const { return static_cast<int>(pts_.rows()); }

    // k nearest points, sorted ascending by distance, ties by ascending index.
    // Throws std::invalid_argument when k > size().
    std::vector<int> knn(const Vec3& q, int k) const;

    // index of the single nearest point (ties by ascending index)
    int nearest(const Vec3& q, double* dist_sq = nullptr) const;

    // all indices with ||p - q|| < r (strict), ascending index order
    std::vector<int> radius(const Vec3& q, double r) const;

private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };

    int build(int begin, int end, int depth);
    void knn_recurse(int node, const Vec3& q, int k,
                     std::vector<std::pair<double, int>>& heap) const;
    void radius_recurse(int node, const Vec3& q, double r2, std::vector<int>& out) const;

    MatX3 pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
    static constexpr int kLeafSize = 16;
};

}  // namespace pcdnf
