#include "pcdnf/network.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace pcdnf {

using ad::Tape;
using ad::Var;

GeometricPriors geometric_priors(const Patch& patch) {
    const int m = patch.rows();
    GeometricPriors priors;
    priors.ang.resize(m);
    priors.dist.resize(m);
    for (int j = 0; j < m; ++j) {
        const Vec3 offset = patch.points.row(j).transpose();  // p_i is the origin
        const double len = offset.norm();
        priors.dist[j] = std::exp(-offset.squaredNorm());
        if (len == 0.0) {
            priors.ang[j] = 0.0;
            continue;
        }
        const Vec3 n = patch.normals.row(j).transpose();
        double c = offset.dot(n) / len;
        priors.ang[j] = std::acos(std::clamp(c, -1.0, 1.0));
    }
    return priors;
}

std::vector<int> top_k_indices(const VecX& scores, int k) {
    std::vector<int> order(scores.size());
    for (int i = 0; i < scores.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + std::min<size_t>(k, order.size()),
                      order.end(), [&](int a, int b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    order.resize(std::min<size_t>(k, order.size()));
    return order;
}

std::vector<int> knn_graph_flat(const Mat& feats, int k) {
    const int rows = static_cast<int>(feats.rows());
    assert(k >= 1 && k <= rows);
    std::vector<int> flat(static_cast<size_t>(rows) * k);

    if (feats.cols() <= 3) {
        // small dimension: direct pairwise distances
        std::vector<std::pair<double, int>> cand(rows);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < rows; ++j)
                cand[j] = {(feats.row(i) - feats.row(j)).squaredNorm(), j};
            std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
            for (int t = 0; t < k; ++t) flat[static_cast<size_t>(i) * k + t] = cand[t].second;
        }
        return flat;
    }

    // high dimension: one Gram product, then ||a||^2 + ||b||^2 - 2 a.b
    VecX sq = feats.rowwise().squaredNorm();
    Mat gram;
    gram.noalias() = feats * feats.transpose();
    std::vector<std::pair<double, int>> cand(rows);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < rows; ++j) cand[j] = {sq[i] + sq[j] - 2.0 * gram(i, j), j};
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        for (int t = 0; t < k; ++t) flat[static_cast<size_t>(i) * k + t] = cand[t].second;
    }
    return flat;
}

Var ParamVars::operator()(const std::string& name) const {
    return vars[set->index_of(name)];
}

ParamVars register_params(Tape& tape, const ParamSet& params, bool requires_grad) {
    ParamVars pv;
    pv.set = &params;
    pv.vars.reserve(params.count());
    for (int i = 0; i < params.count(); ++i)
        pv.vars.push_back(tape.leaf(&params.tensor(i), requires_grad));
    return pv;
}

ParamVars register_params_with_sinks(Tape& tape, const ParamSet& params,
                                     std::vector<Mat>& grad_sinks) {
    ParamVars pv;
    pv.set = &params;
    pv.vars.reserve(params.count());
    for (int i = 0; i < params.count(); ++i)
        pv.vars.push_back(tape.leaf_with_sink(&params.tensor(i), &grad_sinks[i]));
    return pv;
}

Var edgeconv(Tape& tape, Var feats, const std::vector<int>& neighbor_flat, int k, Var w1, Var b1,
             Var w2, Var b2, double slope) {
    assert(neighbor_flat.size() % static_cast<size_t>(k) == 0);
    std::vector<int> rep(neighbor_flat.size());
    for (size_t e = 0; e < rep.size(); ++e) rep[e] = static_cast<int>(e) / k;
    Var xc = tape.gather_rows(feats, std::move(rep));
    Var xn = tape.gather_rows(feats, neighbor_flat);
    std::array<Var, 2> edge_parts{xc, tape.sub(xn, xc)};
    Var e = tape.concat_cols(edge_parts);
    Var h = tape.leaky_relu(tape.linear(e, w1, b1), slope);
    h = tape.leaky_relu(tape.linear(h, w2, b2), slope);
    return tape.segment_max(h, k);
}

Var augment_features(Tape& tape, Var all_feats, Var weights, const std::vector<int>& selected,
                     const std::vector<int>& neighbor_flat, int k4, Var w, Var b, double slope) {
    Var own = tape.gather_rows(all_feats, selected);
    Var nbr = tape.gather_rows(all_feats, neighbor_flat);
    Var nw = tape.gather_rows(weights, neighbor_flat);
    Var agg = tape.scale(tape.segment_sum(tape.row_scale(nbr, nw), k4), 1.0 / k4);
    return tape.leaky_relu(tape.linear(tape.add(own, agg), w, b), slope);
}

namespace {

struct StreamFeatures {
    Var compact;  // (real [+1 pad]) x 128
    Var global;   // 1 x 128
};

// The extractor works on "compact" rows: real patch rows followed by at
// most one pad row (all pads are identical). Pads take part in no graph;
// since a pad duplicates the center row's data exactly, it shares the
// center row's features.
StreamFeatures extract_stream(Tape& tape, const Mat& feats_real, bool padded,
                              const std::vector<int>& g1, int k1e, const std::vector<int>& g2,
                              int k2e, const NetConfig& cfg, const ParamVars& pv,
                              const std::string& prefix) {
    const double slope = cfg.leaky_slope;
    auto lin = [&](Var x, const std::string& name) {
        return tape.linear(x, pv("ext." + prefix + "." + name + ".w"),
                           pv("ext." + prefix + "." + name + ".b"));
    };
    auto ec = [&](Var x, const std::vector<int>& graph, int k, const std::string& name) {
        return edgeconv(tape, x, graph, k, pv("ext." + prefix + "." + name + ".l1.w"),
                        pv("ext." + prefix + "." + name + ".l1.b"),
                        pv("ext." + prefix + "." + name + ".l2.w"),
                        pv("ext." + prefix + "." + name + ".l2.b"), slope);
    };

    Var f0 = tape.constant(feats_real);
    Var a1 = ec(f0, g1, k1e, "ec1");
    Var a2 = ec(f0, g2, k2e, "ec2");
    std::array<Var, 2> scales{a1, a2};
    Var f1 = tape.leaky_relu(lin(tape.concat_cols(scales), "mix"), slope);

    // second EdgeConv runs on a graph rebuilt in the learned feature space
    const int real_rows = static_cast<int>(feats_real.rows());
    const int k3e = std::min(cfg.k3, real_rows);
    std::vector<int> g3 = knn_graph_flat(tape.val(f1), k3e);
    Var coarse = tape.leaky_relu(lin(ec(f1, g3, k3e, "ec3"), "out"), slope);

    StreamFeatures out;
    if (padded) {
        Var center_copy = tape.gather_rows(coarse, {0});
        std::array<Var, 2> stacked{coarse, center_copy};
        out.compact = tape.concat_rows(stacked);
    } else {
        out.compact = coarse;
    }
    out.global = tape.colwise_max(out.compact);
    return out;
}

Var residual_block(Tape& tape, Var x, const ParamVars& pv, const std::string& base,
                   double slope) {
    Var h = tape.leaky_relu(tape.linear(x, pv(base + ".a.w"), pv(base + ".a.b")), slope);
    return tape.add(x, tape.linear(h, pv(base + ".b.w"), pv(base + ".b.b")));
}

}  // namespace

Var regress_displacement(Tape& tape, Var f3_point, const ParamVars& pv, double slope) {
    Var pooled = tape.colwise_max(f3_point);
    Var h = tape.leaky_relu(tape.linear(pooled, pv("dec.disp.l1.w"), pv("dec.disp.l1.b")), slope);
    h = tape.leaky_relu(tape.linear(h, pv("dec.disp.l2.w"), pv("dec.disp.l2.b")), slope);
    return tape.ball_squash(tape.linear(h, pv("dec.disp.l3.w"), pv("dec.disp.l3.b")));
}

NormalRegression regress_normal(Tape& tape, Var f3_normal, const ParamVars& pv, double slope,
                                const Vec3& fallback_normal) {
    Var pooled = tape.colwise_max(f3_normal);
    Var h = tape.leaky_relu(tape.linear(pooled, pv("dec.norm.in.w"), pv("dec.norm.in.b")), slope);
    for (int blk = 1; blk <= 3; ++blk)
        h = residual_block(tape, h, pv, "dec.norm.res" + std::to_string(blk), slope);
    Var raw = tape.linear(h, pv("dec.norm.out.w"), pv("dec.norm.out.b"));
    NormalRegression out;
    if (tape.val(raw).row(0).norm() < 1e-12) {
        out.fallback = true;
        out.normal = tape.constant(fallback_normal.transpose());
    } else {
        out.normal = tape.l2_normalize_row(raw);
    }
    return out;
}

ForwardGraph build_forward(Tape& tape, const Patch& patch, const NetConfig& cfg,
                           const ParamVars& pv) {
    const int m = patch.rows();
    const int real = patch.real_count();
    const bool padded = patch.pad_count > 0;
    const double slope = cfg.leaky_slope;
    assert(real >= 1);

    ForwardGraph fg;
    fg.real_rows = real;

    const Mat coords_real = patch.points.topRows(real);
    const Mat normals_real = patch.normals.topRows(real);

    const int k1e = std::min(cfg.k1, real);
    const int k2e = std::min(cfg.k2, real);
    std::vector<int> g1 = knn_graph_flat(coords_real, k1e);
    std::vector<int> g2 = knn_graph_flat(coords_real, k2e);

    StreamFeatures point_stream =
        extract_stream(tape, coords_real, padded, g1, k1e, g2, k2e, cfg, pv, "point");
    StreamFeatures normal_stream =
        extract_stream(tape, normals_real, padded, g1, k1e, g2, k2e, cfg, pv, "normal");
    fg.coarse_compact = point_stream.compact;
    fg.coarse_compact_normal = normal_stream.compact;
    fg.global_point = point_stream.global;
    fg.global_normal = normal_stream.global;

    // ---- shape-aware selector ----
    const int compact_rows = real + (padded ? 1 : 0);
    Mat ang(compact_rows, 1), dist(compact_rows, 1);
    {
        GeometricPriors priors = geometric_priors(patch);
        for (int j = 0; j < real; ++j) {
            ang(j, 0) = priors.ang[j];
            dist(j, 0) = priors.dist[j];
        }
        if (padded) {
            ang(real, 0) = 0.0;
            dist(real, 0) = 1.0;
        }
    }
    Var fa = tape.leaky_relu(tape.linear(tape.constant(ang), pv("sel.ang.w"), pv("sel.ang.b")),
                             slope);
    Var fd = tape.leaky_relu(tape.linear(tape.constant(dist), pv("sel.dist.w"), pv("sel.dist.b")),
                             slope);
    Var fp = tape.leaky_relu(tape.linear(point_stream.compact, pv("sel.fp.w"), pv("sel.fp.b")),
                             slope);
    Var fn = tape.leaky_relu(tape.linear(normal_stream.compact, pv("sel.fn.w"), pv("sel.fn.b")),
                             slope);
    std::array<Var, 4> sel_parts{fa, fd, fp, fn};
    Var sel_hidden = tape.leaky_relu(
        tape.linear(tape.concat_cols(sel_parts), pv("sel.score.l1.w"), pv("sel.score.l1.b")),
        slope);
    fg.scores_compact = tape.linear(sel_hidden, pv("sel.score.l2.w"), pv("sel.score.l2.b"));

    std::vector<int> full_map(m);
    for (int j = 0; j < m; ++j) full_map[j] = std::min(j, real);
    fg.scores_full = tape.gather_rows(fg.scores_compact, full_map);

    // top-K over real rows only; pad rows fill any shortfall
    const int want_k = std::min(cfg.top_k, m);
    VecX real_scores = tape.val(fg.scores_compact).col(0).head(real);
    std::vector<int> selected = top_k_indices(real_scores, std::min(want_k, real));
    fg.selector.degenerate = static_cast<int>(selected.size()) < want_k;
    for (int j = real; static_cast<int>(selected.size()) < want_k && j < m; ++j)
        selected.push_back(j);
    fg.selector.selected = selected;
    fg.selector.scores = tape.val(fg.scores_full).col(0);

    fg.selected_compact.resize(selected.size());
    for (size_t i = 0; i < selected.size(); ++i)
        fg.selected_compact[i] = std::min(selected[i], real);

    Var weights_compact = tape.logistic(fg.scores_compact);
    fg.sel_weights = tape.gather_rows(weights_compact, fg.selected_compact);

    // ---- feature refinement: augmentation + fusion ----
    // selected pad slots all share one compact row; augment unique rows only
    // and expand afterwards
    int n_real_selected = 0;
    while (n_real_selected < static_cast<int>(selected.size()) &&
           selected[n_real_selected] < real)
        ++n_real_selected;
    std::vector<int> unique_compact(fg.selected_compact.begin(),
                                    fg.selected_compact.begin() + n_real_selected);
    const bool pads_selected = n_real_selected < static_cast<int>(selected.size());
    if (pads_selected) unique_compact.push_back(real);

    const int k4e = std::min(cfg.k4, real);
    std::vector<int> aug_nbr(unique_compact.size() * static_cast<size_t>(k4e));
    {
        KdTree3 real_tree(coords_real);
        for (size_t i = 0; i < unique_compact.size(); ++i) {
            Vec3 q = unique_compact[i] < real
                         ? Vec3(patch.points.row(unique_compact[i]).transpose())
                         : Vec3::Zero();
            std::vector<int> nbrs = real_tree.knn(q, k4e);
            std::copy(nbrs.begin(), nbrs.end(), aug_nbr.begin() + i * k4e);
        }
    }
    Var f2p_unique = augment_features(tape, point_stream.compact, weights_compact, unique_compact,
                                      aug_nbr, k4e, pv("aug.point.w"), pv("aug.point.b"), slope);
    Var f2n_unique = augment_features(tape, normal_stream.compact, weights_compact,
                                      unique_compact, aug_nbr, k4e, pv("aug.normal.w"),
                                      pv("aug.normal.b"), slope);
    if (pads_selected) {
        std::vector<int> expand(selected.size());
        for (size_t l = 0; l < selected.size(); ++l)
            expand[l] = static_cast<int>(l) < n_real_selected ? static_cast<int>(l)
                                                              : n_real_selected;
        fg.f2_point = tape.gather_rows(f2p_unique, expand);
        fg.f2_normal = tape.gather_rows(f2n_unique, std::move(expand));
    } else {
        fg.f2_point = f2p_unique;
        fg.f2_normal = f2n_unique;
    }

    const int K = static_cast<int>(selected.size());
    const int U = static_cast<int>(unique_compact.size());
    std::array<Var, 3> fuse_pu{f2p_unique, f2n_unique, tape.broadcast_row(fg.global_point, U)};
    std::array<Var, 3> fuse_nu{f2n_unique, f2p_unique, tape.broadcast_row(fg.global_normal, U)};
    Var f3p_unique = tape.concat_cols(fuse_pu);
    Var f3n_unique = tape.concat_cols(fuse_nu);
    if (pads_selected) {
        std::array<Var, 3> fuse_p{fg.f2_point, fg.f2_normal,
                                  tape.broadcast_row(fg.global_point, K)};
        std::array<Var, 3> fuse_n{fg.f2_normal, fg.f2_point,
                                  tape.broadcast_row(fg.global_normal, K)};
        fg.f3_point = tape.concat_cols(fuse_p);
        fg.f3_normal = tape.concat_cols(fuse_n);
    } else {
        fg.f3_point = f3p_unique;
        fg.f3_normal = f3n_unique;
    }

    // ---- decoder (pooling over the unique rows equals pooling over all K) ----
    fg.displacement = regress_displacement(tape, f3p_unique, pv, slope);
    Mat center = patch.frame.translation.transpose();
    fg.denoised = tape.add(tape.scale(fg.displacement, patch.frame.scale), tape.constant(center));

    NormalRegression nr =
        regress_normal(tape, f3n_unique, pv, slope, patch.normals.row(0).transpose());
    fg.normal = nr.normal;
    fg.normal_fallback = nr.fallback;

#ifndef NDEBUG
    assert(tape.val(fg.denoised).allFinite());
    assert(tape.val(fg.normal).allFinite());
    assert(tape.val(fg.scores_full).allFinite());
    assert(tape.val(fg.f3_point).allFinite() && tape.val(fg.f3_normal).allFinite());
#endif
    return fg;
}

ForwardValues forward(const Patch& patch, const NetConfig& cfg, const ParamSet& params) {
    Tape tape;
    ParamVars pv = register_params(tape, params, false);
    ForwardGraph fg = build_forward(tape, patch, cfg, pv);
    ForwardValues out;
    out.denoised = tape.val(fg.denoised).row(0).transpose();
    out.normal = tape.val(fg.normal).row(0).transpose();
    out.scores = tape.val(fg.scores_full).col(0);
    out.selector_degenerate = fg.selector.degenerate;
    out.normal_fallback = fg.normal_fallback;
    return out;
}

CoarseFeatures extract_coarse(const Patch& patch, const NetConfig& cfg, const ParamSet& params) {
    Tape tape;
    ParamVars pv = register_params(tape, params, false);
    ForwardGraph fg = build_forward(tape, patch, cfg, pv);
    const int m = patch.rows();
    const int real = fg.real_rows;
    std::vector<int> full_map(m);
    for (int j = 0; j < m; ++j) full_map[j] = std::min(j, real);

    CoarseFeatures out;
    out.point_feats = tape.val(tape.gather_rows(fg.coarse_compact, full_map));
    out.normal_feats = tape.val(tape.gather_rows(fg.coarse_compact_normal, full_map));
    out.global_point = tape.val(fg.global_point).row(0).transpose();
    out.global_normal = tape.val(fg.global_normal).row(0).transpose();
    return out;
}

SelectorOutput score_points(const Patch& patch, const NetConfig& cfg, const ParamSet& params) {
    Tape tape;
    ParamVars pv = register_params(tape, params, false);
    ForwardGraph fg = build_forward(tape, patch, cfg, pv);
    return fg.selector;
}

}  // namespace pcdnf
