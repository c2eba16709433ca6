#include "pcdnf/inference.hpp"

#include <thread>

namespace pcdnf {

namespace {

PointCloud denoise_once(const PointCloud& input, const ParamSet& params, const NetConfig& net_cfg,
                        const InferenceConfig& cfg, int iteration) {
    const int n = input.size();
    const double r = cfg.patch_radius_frac * input.bbox_diag();
    KdTree3 tree(input.points);

    PointCloud out;
    out.points.resize(n, 3);
    out.normals.resize(n, 3);

    auto run_range = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            uint64_t patch_seed = mix_seed(cfg.seed, static_cast<uint64_t>(iteration),
                                           static_cast<uint64_t>(i));
            Patch patch = extract_patch(input, tree, i, r, cfg.patch_rows, patch_seed);
            ForwardValues fv = forward(patch, net_cfg, params);
            out.points.row(i) = fv.denoised.transpose();
            out.normals.row(i) = fv.normal.transpose();
        }
    };

    int workers = cfg.workers > 0 ? cfg.workers
                                  : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        run_range(0, n);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w)
            threads.emplace_back(run_range, n * w / workers, n * (w + 1) / workers);
        for (std::thread& t : threads) t.join();
    }
    return out;
}

}  // namespace

std::vector<PointCloud> denoise_cloud(const PointCloud& cloud, const ParamSet& params,
                                      const NetConfig& net_cfg, const InferenceConfig& cfg) {
    if (cloud.size() == 0) throw std::invalid_argument("denoise_cloud: empty cloud");
    if (cfg.iterations < 1) throw std::invalid_argument("denoise_cloud: iterations must be >= 1");

    PointCloud current = cloud;
    if (!current.has_normals())
        current.normals = estimate_normals_pca(current, std::min(cfg.pca_k, current.size())).normals;

    std::vector<PointCloud> results;
    results.reserve(cfg.iterations);
    for (int it = 0; it < cfg.iterations; ++it) {
        // filtered normals of iteration t feed iteration t+1 as raw normals
        current = denoise_once(current, params, net_cfg, cfg, it);
        results.push_back(current);
    }
    return results;
}

std::pair<Vec3, Vec3> denoise_point(const PointCloud& cloud, int index, const ParamSet& params,
                                    const NetConfig& net_cfg, const InferenceConfig& cfg) {
    if (index < 0 || index >= cloud.size())
        throw std::invalid_argument("denoise_point: index out of range");

    PointCloud input = cloud;
    if (!input.has_normals())
        input.normals = estimate_normals_pca(input, std::min(cfg.pca_k, input.size())).normals;

    const double r = cfg.patch_radius_frac * input.bbox_diag();
    KdTree3 tree(input.points);
    uint64_t patch_seed = mix_seed(cfg.seed, 0, static_cast<uint64_t>(index));
    Patch patch = extract_patch(input, tree, index, r, cfg.patch_rows, patch_seed);
    ForwardValues fv = forward(patch, net_cfg, params);
    return {fv.denoised, fv.normal};
}

}  // namespace pcdnf
