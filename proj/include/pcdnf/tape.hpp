#pragma once

#include "pcdnf/common.hpp"

#include <span>
#include <vector>

namespace pcdnf::ad {

class Tape;

// Cheap handle into a Tape. Invalid until assigned.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Eigen matrices. Nodes are created in forward
// order; backward() walks them in reverse. Parameters enter as external
// leaves (non-owning pointers) so a training step never copies weights.
class Tape {
public:
    Var leaf(const Mat* external, bool requires_grad = true);
    // leaf whose gradient accumulates straight into caller-owned storage
    // (the sink is += into, never zeroed here)
    Var leaf_with_sink(const Mat* external, Mat* grad_sink);
    Var constant(Mat value);
    Var constant_scalar(double v);

    const Mat& val(Var v) const;
    const Mat& grad_of(Var v) const;  // valid after backward()
    double scalar(Var v) const { return val(v)(0, 0); }

    // y = x * w + broadcast(b); w is C x D, b is 1 x D (b may be invalid)
    Var linear(Var x, Var w, Var b);
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_scaled(Var a, Var b, double ca, double cb);  // ca*a + cb*b
    Var scale(Var a, double s);
    Var add_const(Var a, double s);
    Var cmul(Var a, Var b);
    Var leaky_relu(Var a, double slope);
    Var logistic(Var a);
    Var exp(Var a);
    Var sqrt(Var a);
    Var abs(Var a);     // subgradient 0 at the kink
    Var square(Var a);
    Var concat_cols(std::span<const Var> parts);
    Var concat_rows(std::span<const Var> parts);
    Var gather_rows(Var a, std::vector<int> idx);
    Var broadcast_row(Var a, int rows);       // a is 1 x C
    Var segment_sum(Var a, int group_size);   // contiguous fixed-size groups
    Var segment_max(Var a, int group_size);   // ties keep the first row
    Var colwise_max(Var a);                   // 1 x C, ties keep the first row
    Var rowwise_sum(Var a);                   // M x 1
    Var sum_all(Var a);                       // 1 x 1
    Var row_scale(Var a, Var w);              // row i scaled by w(i, 0)
    Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows);  // a is K x C
    Var div_scalar(Var num, Var den);         // both 1 x 1
    Var l2_normalize_row(Var a);              // a is 1 x C
    Var ball_squash(Var a);                   // 1 x 3 -> closed unit ball

    void backward(Var root);  // root must be 1 x 1
    void clear();
    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    enum class Op {
        Leaf, Const, Linear, Matmul, Add, Sub, AddScaled, Scale, AddConst, Cmul, LeakyRelu,
        Logistic, Exp, Sqrt, Abs, Square, ConcatCols, ConcatRows, GatherRows, BroadcastRow,
        SegmentSum, SegmentMax, ColwiseMax, RowwiseSum, SumAll, RowScale, ScatterAddRows,
        DivScalar, L2NormalizeRow, BallSquash,
    };

    struct Node {
        Op op = Op::Const;
        Mat value;
        const Mat* external = nullptr;  // set for external leaves
        Mat* grad_sink = nullptr;       // set for sink leaves
        Mat grad;
        int a = -1, b = -1, c = -1;
        std::vector<int> many;   // concat parents
        std::vector<int> idx;    // gather/scatter indices or argmax rows
        double s0 = 0.0, s1 = 0.0;
        int i0 = 0;
        bool requires_grad = false;
    };

    const Mat& value_of(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }
    int push(Node node);
    Mat& grad_buffer(int id);
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }
    void backward_node(int id);

    std::vector<Node> nodes_;
};

}  // namespace pcdnf::ad
