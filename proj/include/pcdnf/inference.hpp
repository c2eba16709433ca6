#pragma once

#include "pcdnf/network.hpp"

namespace pcdnf {

struct InferenceConfig {
    int iterations = 1;
    double patch_radius_frac = 0.05;
    int patch_rows = 512;
    int pca_k = 16;      // bootstrap normals when the input has none
    uint64_t seed = 0;
    int workers = 0;     // 0 = hardware concurrency
};

// Pointwise denoising + normal filtering of a whole cloud. Each iteration
// feeds the previous iteration's positions and filtered normals back in.
// Returns one cloud per iteration.
std::vector<PointCloud> denoise_cloud(const PointCloud& cloud, const ParamSet& params,
                                      const NetConfig& net_cfg, const InferenceConfig& cfg);

// Single-point convenience wrapper; row `index` of a one-iteration run.
std::pair<Vec3, Vec3> denoise_point(const PointCloud& cloud, int index, const ParamSet& params,
                                    const NetConfig& net_cfg, const InferenceConfig& cfg);

}  // namespace pcdnf
