#include "pcdnf/tape.hpp"

#include <cassert>
#include <cmath>

namespace pcdnf::ad {

namespace {
constexpr double kTiny = 1e-18;
}

int Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

const Mat& Tape::val(Var v) const {
    assert(v.valid());
    return value_of(v.id);
}

const Mat& Tape::grad_of(Var v) const {
    assert(v.valid());
    return nodes_[v.id].grad;
}

Mat& Tape::grad_buffer(int id) {
    Node& n = nodes_[id];
    if (n.grad_sink) return *n.grad_sink;
    if (n.grad.size() == 0) n.grad = Mat::Zero(value_of(id).rows(), value_of(id).cols());
    return n.grad;
}

Var Tape::leaf(const Mat* external, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.external = external;
    n.requires_grad = requires_grad;
    return {push(std::move(n))};
}

Var Tape::leaf_with_sink(const Mat* external, Mat* grad_sink) {
    Node n;
    n.op = Op::Leaf;
    n.external = external;
    n.grad_sink = grad_sink;
    n.requires_grad = true;
    return {push(std::move(n))};
}

Var Tape::constant(Mat value) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(value);
    return {push(std::move(n))};
}

Var Tape::constant_scalar(double v) {
    return constant(Mat::Constant(1, 1, v));
}

Var Tape::linear(Var x, Var w, Var b) {
    Node n;
    n.op = Op::Linear;
    n.a = x.id;
    n.b = w.id;
    n.c = b.valid() ? b.id : -1;
    n.value.noalias() = val(x) * val(w);
    if (b.valid()) n.value.rowwise() += val(b).row(0);
    n.requires_grad = needs(x) || needs(w) || (b.valid() && needs(b));
    return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
    Node n;
    n.op = Op::Matmul;
    n.a = a.id;
    n.b = b.id;
    n.value.noalias() = val(a) * val(b);
    n.requires_grad = needs(a) || needs(b);
    return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.value = val(a) + val(b);
    n.requires_grad = needs(a) || needs(b);
    return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.value = val(a) - val(b);
    n.requires_grad = needs(a) || needs(b);
    return {push(std::move(n))};
}

Var Tape::add_scaled(Var a, Var b, double ca, double cb) {
    Node n;
    n.op = Op::AddScaled;
    n.a = a.id;
    n.b = b.id;
    n.s0 = ca;
    n.s1 = cb;
    n.value = ca * val(a) + cb * val(b);
    n.requires_grad = needs(a) || needs(b);
    return {push(std::move(n))};
}

Var Tape::scale(Var a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.s0 = s;
    n.value = s * val(a);
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::add_const(Var a, double s) {
    Node n;
    n.op = Op::AddConst;
    n.a = a.id;
    n.value = val(a).array() + s;
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::cmul(Var a, Var b) {
    Node n;
    n.op = Op::Cmul;
    n.a = a.id;
    n.b = b.id;
    n.value = val(a).cwiseProduct(val(b));
    n.requires_grad = needs(a) || needs(b);
    return {push(std::move(n))};
}

Var Tape::leaky_relu(Var a, double slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.a = a.id;
    n.s0 = slope;
    n.value = val(a).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::logistic(Var a) {
    Node n;
    n.op = Op::Logistic;
    n.a = a.id;
    n.value = val(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::exp(Var a) {
    Node n;
    n.op = Op::Exp;
    n.a = a.id;
    n.value = val(a).array().exp();
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::sqrt(Var a) {
    Node n;
    n.op = Op::Sqrt;
    n.a = a.id;
    n.value = val(a).array().sqrt();
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::abs(Var a) {
    Node n;
    n.op = Op::Abs;
    n.a = a.id;
    n.value = val(a).cwiseAbs();
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::square(Var a) {
    Node n;
    n.op = Op::Square;
    n.a = a.id;
    n.value = val(a).array().square();
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::concat_cols(std::span<const Var> parts) {
    Node n;
    n.op = Op::ConcatCols;
    int cols = 0;
    const int rows = static_cast<int>(val(parts[0]).rows());
    for (Var p : parts) {
        cols += static_cast<int>(val(p).cols());
        n.many.push_back(p.id);
        n.requires_grad = n.requires_grad || needs(p);
    }
    n.value.resize(rows, cols);
    int at = 0;
    for (Var p : parts) {
        const Mat& m = val(p);
        n.value.middleCols(at, m.cols()) = m;
        at += static_cast<int>(m.cols());
    }
    return {push(std::move(n))};
}

Var Tape::concat_rows(std::span<const Var> parts) {
    Node n;
    n.op = Op::ConcatRows;
    int rows = 0;
    const int cols = static_cast<int>(val(parts[0]).cols());
    for (Var p : parts) {
        rows += static_cast<int>(val(p).rows());
        n.many.push_back(p.id);
        n.requires_grad = n.requires_grad || needs(p);
    }
    n.value.resize(rows, cols);
    int at = 0;
    for (Var p : parts) {
        const Mat& m = val(p);
        n.value.middleRows(at, m.rows()) = m;
        at += static_cast<int>(m.rows());
    }
    return {push(std::move(n))};
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    const Mat& m = val(a);
    n.value.resize(static_cast<int>(idx.size()), m.cols());
    for (size_t i = 0; i < idx.size(); ++i) n.value.row(i) = m.row(idx[i]);
    n.idx = std::move(idx);
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::broadcast_row(Var a, int rows) {
    Node n;
    n.op = Op::BroadcastRow;
    n.a = a.id;
    n.value = val(a).row(0).colwise().replicate(rows);
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::segment_sum(Var a, int group_size) {
    Node n;
    n.op = Op::SegmentSum;
    n.a = a.id;
    n.i0 = group_size;
    const Mat& m = val(a);
    const int groups = static_cast<int>(m.rows()) / group_size;
    n.value.setZero(groups, m.cols());
    for (int g = 0; g < groups; ++g)
        for (int r = 0; r < group_size; ++r) n.value.row(g) += m.row(g * group_size + r);
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::segment_max(Var a, int group_size) {
    Node n;
    n.op = Op::SegmentMax;
    n.a = a.id;
    n.i0 = group_size;
    const Mat& m = val(a);
    const int groups = static_cast<int>(m.rows()) / group_size;
    const int cols = static_cast<int>(m.cols());
    n.value.resize(groups, cols);
    n.idx.resize(static_cast<size_t>(groups) * cols);
    for (int g = 0; g < groups; ++g) {
        for (int c = 0; c < cols; ++c) {
            double best = m(g * group_size, c);
            int best_r = g * group_size;
            for (int r = 1; r < group_size; ++r) {
                double v = m(g * group_size + r, c);
                if (v > best) {
                    best = v;
                    best_r = g * group_size + r;
                }
            }
            n.value(g, c) = best;
            n.idx[static_cast<size_t>(g) * cols + c] = best_r;
        }
    }
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::colwise_max(Var a) {
    Node n;
    n.op = Op::ColwiseMax;
    n.a = a.id;
    const Mat& m = val(a);
    const int cols = static_cast<int>(m.cols());
    n.value.resize(1, cols);
    n.idx.resize(cols);
    for (int c = 0; c < cols; ++c) {
        double best = m(0, c);
        int best_r = 0;
        for (int r = 1; r < m.rows(); ++r) {
            if (m(r, c) > best) {
                best = m(r, c);
                best_r = r;
            }
        }
        n.value(0, c) = best;
        n.idx[c] = best_r;
    }
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::rowwise_sum(Var a) {
    Node n;
    n.op = Op::RowwiseSum;
    n.a = a.id;
    n.value = val(a).rowwise().sum();
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::sum_all(Var a) {
    Node n;
    n.op = Op::SumAll;
    n.a = a.id;
    n.value = Mat::Constant(1, 1, val(a).sum());
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::row_scale(Var a, Var w) {
    Node n;
    n.op = Op::RowScale;
    n.a = a.id;
    n.b = w.id;
    n.value = val(a).array().colwise() * val(w).col(0).array();
    n.requires_grad = needs(a) || needs(w);
    return {push(std::move(n))};
}

Var Tape::scatter_add_rows(Var a, std::vector<int> idx, int out_rows) {
    Node n;
    n.op = Op::ScatterAddRows;
    n.a = a.id;
    const Mat& m = val(a);
    n.value.setZero(out_rows, m.cols());
    for (size_t i = 0; i < idx.size(); ++i) n.value.row(idx[i]) += m.row(i);
    n.idx = std::move(idx);
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::div_scalar(Var num, Var den) {
    Node n;
    n.op = Op::DivScalar;
    n.a = num.id;
    n.b = den.id;
    n.value = Mat::Constant(1, 1, val(num)(0, 0) / val(den)(0, 0));
    n.requires_grad = needs(num) || needs(den);
    return {push(std::move(n))};
}

Var Tape::l2_normalize_row(Var a) {
    Node n;
    n.op = Op::L2NormalizeRow;
    n.a = a.id;
    const double norm = val(a).row(0).norm();
    n.s0 = norm;
    n.value = val(a) / norm;
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

Var Tape::ball_squash(Var a) {
    Node n;
    n.op = Op::BallSquash;
    n.a = a.id;
    const double r = val(a).row(0).norm();
    n.s0 = r;
    // v * tanh(|v|)/|v| maps onto the closed unit ball; identity at 0
    const double f = r < 1e-12 ? 1.0 : std::tanh(r) / r;
    n.value = val(a) * f;
    const double out_norm = n.value.row(0).norm();
    if (out_norm > 1.0)  // keep rounding from escaping the ball
        n.value *= (1.0 - 4.0 * std::numeric_limits<double>::epsilon()) / out_norm;
    n.requires_grad = needs(a);
    return {push(std::move(n))};
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) return;  // no gradient reached this node
    const Mat& g = n.grad;
    auto pass = [&](int parent, auto&& fn) {
        if (parent < 0 || !nodes_[parent].requires_grad) return;
        fn(grad_buffer(parent));
    };

    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::Linear: {
            const Mat& x = value_of(n.a);
            const Mat& w = value_of(n.b);
            pass(n.a, [&](Mat& gx) { gx.noalias() += g * w.transpose(); });
            pass(n.b, [&](Mat& gw) { gw.noalias() += x.transpose() * g; });
            pass(n.c, [&](Mat& gb) { gb.row(0) += g.colwise().sum(); });
            break;
        }
        case Op::Matmul: {
            const Mat& a = value_of(n.a);
            const Mat& b = value_of(n.b);
            pass(n.a, [&](Mat& ga) { ga.noalias() += g * b.transpose(); });
            pass(n.b, [&](Mat& gb) { gb.noalias() += a.transpose() * g; });
            break;
        }
        case Op::Add:
            pass(n.a, [&](Mat& ga) { ga += g; });
            pass(n.b, [&](Mat& gb) { gb += g; });
            break;
        case Op::Sub:
            pass(n.a, [&](Mat& ga) { ga += g; });
            pass(n.b, [&](Mat& gb) { gb -= g; });
            break;
        case Op::AddScaled:
            pass(n.a, [&](Mat& ga) { ga += n.s0 * g; });
            pass(n.b, [&](Mat& gb) { gb += n.s1 * g; });
            break;
        case Op::Scale:
            pass(n.a, [&](Mat& ga) { ga += n.s0 * g; });
            break;
        case Op::AddConst:
            pass(n.a, [&](Mat& ga) { ga += g; });
            break;
        case Op::Cmul:
            pass(n.a, [&](Mat& ga) { ga += g.cwiseProduct(value_of(n.b)); });
            pass(n.b, [&](Mat& gb) { gb += g.cwiseProduct(value_of(n.a)); });
            break;
        case Op::LeakyRelu: {
            const Mat& x = value_of(n.a);
            const double slope = n.s0;
            pass(n.a, [&](Mat& ga) {
                ga += g.binaryExpr(x, [slope](double gv, double xv) {
                    return xv > 0.0 ? gv : slope * gv;
                });
            });
            break;
        }
        case Op::Logistic:
            pass(n.a, [&](Mat& ga) {
                ga += g.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix()));
            });
            break;
        case Op::Exp:
            pass(n.a, [&](Mat& ga) { ga += g.cwiseProduct(n.value); });
            break;
        case Op::Sqrt:
            pass(n.a, [&](Mat& ga) {
                ga += g.binaryExpr(n.value, [](double gv, double yv) {
                    return gv / (2.0 * std::max(yv, kTiny));
                });
            });
            break;
        case Op::Abs: {
            const Mat& x = value_of(n.a);
            pass(n.a, [&](Mat& ga) {
                ga += g.binaryExpr(x, [](double gv, double xv) {
                    return xv > 0.0 ? gv : (xv < 0.0 ? -gv : 0.0);
                });
            });
            break;
        }
        case Op::Square: {
            const Mat& x = value_of(n.a);
            pass(n.a, [&](Mat& ga) { ga += 2.0 * g.cwiseProduct(x); });
            break;
        }
        case Op::ConcatCols: {
            int at = 0;
            for (int pid : n.many) {
                const int c = static_cast<int>(value_of(pid).cols());
                if (nodes_[pid].requires_grad) grad_buffer(pid) += g.middleCols(at, c);
                at += c;
            }
            break;
        }
        case Op::ConcatRows: {
            int at = 0;
            for (int pid : n.many) {
                const int r = static_cast<int>(value_of(pid).rows());
                if (nodes_[pid].requires_grad) grad_buffer(pid) += g.middleRows(at, r);
                at += r;
            }
            break;
        }
        case Op::GatherRows:
            pass(n.a, [&](Mat& ga) {
                for (size_t i = 0; i < n.idx.size(); ++i) ga.row(n.idx[i]) += g.row(i);
            });
            break;
        case Op::BroadcastRow:
            pass(n.a, [&](Mat& ga) { ga.row(0) += g.colwise().sum(); });
            break;
        case Op::SegmentSum:
            pass(n.a, [&](Mat& ga) {
                for (int r = 0; r < ga.rows(); ++r) ga.row(r) += g.row(r / n.i0);
            });
            break;
        case Op::SegmentMax:
            pass(n.a, [&](Mat& ga) {
                const int cols = static_cast<int>(g.cols());
                for (int gr = 0; gr < g.rows(); ++gr)
                    for (int c = 0; c < cols; ++c)
                        ga(n.idx[static_cast<size_t>(gr) * cols + c], c) += g(gr, c);
            });
            break;
        case Op::ColwiseMax:
            pass(n.a, [&](Mat& ga) {
                for (int c = 0; c < g.cols(); ++c) ga(n.idx[c], c) += g(0, c);
            });
            break;
        case Op::RowwiseSum:
            pass(n.a, [&](Mat& ga) { ga.colwise() += g.col(0); });
            break;
        case Op::SumAll:
            pass(n.a, [&](Mat& ga) { ga.array() += g(0, 0); });
            break;
        case Op::RowScale: {
            const Mat& a = value_of(n.a);
            const Mat& w = value_of(n.b);
            pass(n.a, [&](Mat& ga) { ga += (g.array().colwise() * w.col(0).array()).matrix(); });
            pass(n.b, [&](Mat& gw) {
                gw.col(0) += g.cwiseProduct(a).rowwise().sum();
            });
            break;
        }
        case Op::ScatterAddRows:
            pass(n.a, [&](Mat& ga) {
                for (size_t i = 0; i < n.idx.size(); ++i) ga.row(i) += g.row(n.idx[i]);
            });
            break;
        case Op::DivScalar: {
            const double a = value_of(n.a)(0, 0);
            const double b = value_of(n.b)(0, 0);
            pass(n.a, [&](Mat& ga) { ga(0, 0) += g(0, 0) / b; });
            pass(n.b, [&](Mat& gb) { gb(0, 0) -= g(0, 0) * a / (b * b); });
            break;
        }
        case Op::L2NormalizeRow: {
            // d/dv (v/|v|) = (I - y y^T) / |v|
            const double norm = n.s0;
            pass(n.a, [&](Mat& ga) {
                const double dot = (g.row(0) * n.value.row(0).transpose())(0, 0);
                ga.row(0) += (g.row(0) - dot * n.value.row(0)) / norm;
            });
            break;
        }
        case Op::BallSquash: {
            const Mat& v = value_of(n.a);
            const double r = n.s0;
            pass(n.a, [&](Mat& ga) {
                if (r < 1e-12) {
                    ga += g;  // identity near the origin
                    return;
                }
                const double t = std::tanh(r);
                const double f = t / r;
                const double sech2 = 1.0 - t * t;
                const double coef = (sech2 - f) / (r * r);
                const double vdotg = (v.row(0) * g.row(0).transpose())(0, 0);
                ga.row(0) += f * g.row(0) + coef * vdotg * v.row(0);
            });
            break;
        }
    }
}

void Tape::backward(Var root) {
    assert(root.valid());
    assert(val(root).rows() == 1 && val(root).cols() == 1);
    grad_buffer(root.id)(0, 0) = 1.0;
    for (int id = root.id; id >= 0; --id) {
        if (nodes_[id].requires_grad) backward_node(id);
    }
}

void Tape::clear() {
    nodes_.clear();
}

}  // namespace pcdnf::ad
