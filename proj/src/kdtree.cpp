#include "pcdnf/kdtree.hpp"

#include <algorithm>
#include <cmath>

namespace pcdnf {

namespace {

// heap comparator: the "worst" candidate (largest dist, then largest index)
// sits on top so it can be evicted first
inline bool worse(const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
}

}  // namespace

KdTree3::KdTree3(const MatX3& pts) : pts_(pts) {
    const int n = static_cast<int>(pts_.rows());
    order_.resize(n);
    for (int i = 0; i < n; ++i) order_[i] = i;
    if (n > 0) root_ = build(0, n, 0);
}

int KdTree3::build(int begin, int end, int depth) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }

    // split along the widest axis of this subset
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
        lo = lo.cwiseMin(pts_.row(order_[i]).transpose());
        hi = hi.cwiseMax(pts_.row(order_[i]).transpose());
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) {  // all points coincide; keep as leaf
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         double va = pts_(a, axis), vb = pts_(b, axis);
                         if (va != vb) return va < vb;
                         return a < b;
                     });

    node.axis = axis;
    node.split = pts_(order_[mid], axis);
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int l = build(begin, mid, depth + 1);
    int r = build(mid, end, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
}

void KdTree3::knn_recurse(int node_id, const Vec3& q, int k,
                          std::vector<std::pair<double, int>>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            int idx = order_[i];
            double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
            std::pair<double, int> cand{d2, idx};
            if (static_cast<int>(heap.size()) < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), worse);
            } else if (worse(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), worse);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), worse);
            }
        }
        return;
    }

    double delta = q[node.axis] - node.split;
    int near = delta <= 0.0 ? node.left : node.right;
    int far = delta <= 0.0 ? node.right : node.left;
    knn_recurse(near, q, k, heap);
    // the far side can still hold an equal-distance, lower-index candidate,
    // so prune only on strict inequality
    if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().first)
        knn_recurse(far, q, k, heap);
}

std::vector<int> KdTree3::knn(const Vec3& q, int k) const {
    if (k > size())
        throw std::invalid_argument("KdTree3::knn: k (" + std::to_string(k) +
                                    ") exceeds point count (" + std::to_string(size()) + ")");
    std::vector<std::pair<double, int>> heap;
    heap.reserve(k);
    if (k > 0) knn_recurse(root_, q, k, heap);
    std::sort(heap.begin(), heap.end());
    std::vector<int> out(heap.size());
    for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
}

int KdTree3::nearest(const Vec3& q, double* dist_sq) const {
    std::vector<int> idx = knn(q, 1);
    if (dist_sq) *dist_sq = (pts_.row(idx[0]).transpose() - q).squaredNorm();
    return idx[0];
}

void KdTree3::radius_recurse(int node_id, const Vec3& q, double r2, std::vector<int>& out) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            int idx = order_[i];
            double d2 = (pts_.row(idx).transpose() - q).squaredNorm();
            if (d2 < r2) out.push_back(idx);
        }
        return;
    }
    double delta = q[node.axis] - node.split;
    if (delta < 0.0) {
        radius_recurse(node.left, q, r2, out);
        if (delta * delta < r2) radius_recurse(node.right, q, r2, out);
    } else {
        radius_recurse(node.right, q, r2, out);
        if (delta * delta < r2) radius_recurse(node.left, q, r2, out);
    }
}

std::vector<int> KdTree3::radius(const Vec3& q, double r) const {
    std::vector<int> out;
    if (size() == 0 || r <= 0.0) return out;
    radius_recurse(root_, q, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace pcdnf
