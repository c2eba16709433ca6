#pragma once

#include "pcdnf/geometry.hpp"
#include "pcdnf/params.hpp"
#include "pcdnf/tape.hpp"

namespace pcdnf {

// Architecture hyperparameters. k1/k2 are Euclidean-graph sizes, k3 the
// feature-space graph size, k4 the augmentation neighborhood, top_k the
// selector retention count.
struct NetConfig {
    int k1 = 8;
    int k2 = 16;
    int k3 = 16;
    int k4 = 10;
    int top_k = 256;
    double leaky_slope = 0.1;
};

struct GeometricPriors {
    VecX ang;   // angle between (p_j - p_i) and the raw normal n_j, radians
    VecX dist;  // exp(-||p_j - p_i||^2), local-frame units
};

// Per patch row; zero-offset rows (center, pads) get ang = 0, dist = 1.
GeometricPriors geometric_priors(const Patch& patch);

struct CoarseFeatures {
    Mat point_feats;    // M x 128
    Mat normal_feats;   // M x 128
    VecX global_point;  // column-wise max over the M rows
    VecX global_normal;
};

struct SelectorOutput {
    VecX scores;               // M raw scores
    std::vector<int> selected; // K patch-row indices
    bool degenerate = false;   // fewer real rows than K; pad indices fill the rest
};

// Indices of the k largest entries, ties broken by ascending index.
std::vector<int> top_k_indices(const VecX& scores, int k);

// Flat row-major kNN graph (self included) among the rows of `feats`;
// ties broken by ascending index. Returns rows*k neighbor indices.
std::vector<int> knn_graph_flat(const Mat& feats, int k);

// Parameter tensors registered as tape leaves.
struct ParamVars {
    const ParamSet* set = nullptr;
    std::vector<ad::Var> vars;
    ad::Var operator()(const std::string& name) const;
};
ParamVars register_params(ad::Tape& tape, const ParamSet& params, bool requires_grad = true);
// training-path variant: gradients accumulate straight into grad_sinks
ParamVars register_params_with_sinks(ad::Tape& tape, const ParamSet& params,
                                     std::vector<Mat>& grad_sinks);

// One EdgeConv: per edge h(x_j, x_q - x_j) through a two-layer MLP, then
// element-wise max over each row's k neighbors.
ad::Var edgeconv(ad::Tape& tape, ad::Var feats, const std::vector<int>& neighbor_flat, int k,
                 ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2, double slope);

// Score-weighted neighborhood aggregation: MLP(f + (1/k4) * sum w_q f_q).
ad::Var augment_features(ad::Tape& tape, ad::Var all_feats, ad::Var weights,
                         const std::vector<int>& selected, const std::vector<int>& neighbor_flat,
                         int k4, ad::Var w, ad::Var b, double slope);

// Decoder heads over refined K x 384 features. The displacement is squashed
// onto the closed unit ball (local frame). The normal head falls back to
// `fallback_normal` when the pre-normalization vector collapses.
ad::Var regress_displacement(ad::Tape& tape, ad::Var f3_point, const ParamVars& pv, double slope);
struct NormalRegression {
    ad::Var normal;
    bool fallback = false;
};
NormalRegression regress_normal(ad::Tape& tape, ad::Var f3_normal, const ParamVars& pv,
                                double slope, const Vec3& fallback_normal);

// Everything the training loop needs from one patch forward.
struct ForwardGraph {
    ad::Var coarse_compact;         // point-stream features over compact rows
    ad::Var coarse_compact_normal;
    ad::Var global_point, global_normal;  // 1 x 128
    ad::Var scores_full;            // M x 1 raw scores
    ad::Var scores_compact;         // compact rows x 1
    SelectorOutput selector;
    std::vector<int> selected_compact;
    ad::Var sel_weights;            // K x 1, logistic of selected raw scores
    ad::Var f2_point, f2_normal;    // K x 128
    ad::Var f3_point, f3_normal;    // K x 384
    ad::Var displacement;           // 1 x 3, local frame, unit ball
    ad::Var denoised;               // 1 x 3, model units
    ad::Var normal;                 // 1 x 3, unit
    bool normal_fallback = false;
    int real_rows = 0;
};

ForwardGraph build_forward(ad::Tape& tape, const Patch& patch, const NetConfig& cfg,
                           const ParamVars& pv);

// Value-level wrappers (each runs on a private tape).
struct ForwardValues {
    Vec3 denoised;
    Vec3 normal;
    VecX scores;
    bool selector_degenerate = false;
    bool normal_fallback = false;
};
ForwardValues forward(const Patch& patch, const NetConfig& cfg, const ParamSet& params);
CoarseFeatures extract_coarse(const Patch& patch, const NetConfig& cfg, const ParamSet& params);
SelectorOutput score_points(const Patch& patch, const NetConfig& cfg, const ParamSet& params);

}  // namespace pcdnf
