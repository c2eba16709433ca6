#include "pcdnf/training.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <thread>

namespace pcdnf {

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) throw std::invalid_argument("lr_schedule: epoch out of range");
    if (cfg.epochs <= 1) return cfg.lr_start;
    double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

void sgd_momentum_step(std::vector<Mat>& params_flat, std::vector<Mat>& velocity,
                       const std::vector<Mat>& grads, double lr, double momentum) {
    for (size_t i = 0; i < params_flat.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params_flat[i] -= lr * velocity[i];
    }
}

namespace {

struct SampleCache {
    std::unique_ptr<KdTree3> noisy_tree;
    std::unique_ptr<KdTree3> clean_tree;
    double radius = 0.0;
};

// Forward + loss + backward for one patch; raw gradients accumulate into
// `grad_accum` (scaled by the caller once per batch).
StepStats patch_gradient(const NoisySample& sample, const SampleCache& cache, int center,
                         uint64_t patch_seed, const TrainConfig& cfg, const NetConfig& net_cfg,
                         const LossConfig& loss_cfg, const ParamSet& params,
                         std::vector<Mat>& grad_accum) {
    Patch patch = extract_patch(sample.noisy, *cache.noisy_tree, center, cache.radius,
                                cfg.patch_rows, patch_seed);

    ad::Tape tape;
    ParamVars pv = register_params_with_sinks(tape, params, grad_accum);
    ForwardGraph fg = build_forward(tape, patch, net_cfg, pv);

    const Vec3 p_hat = tape.val(fg.denoised).row(0).transpose();
    GroundTruthPatch gt = build_gt_patch(sample.clean, *cache.clean_tree, p_hat, cache.radius);
    // raw normals are unoriented; align the normal-filter target with the
    // center's raw normal so the loss never chases a sign bit
    if (gt.center_normal.dot(patch.normals.row(0).transpose()) < 0.0)
        gt.center_normal = -gt.center_normal;

    // selector weights land on their nearest ground-truth rows; pad slots
    // carry no weight
    const int K = static_cast<int>(fg.selector.selected.size());
    std::vector<int> real_slots, corr;
    real_slots.reserve(K);
    corr.reserve(K);
    for (int l = 0; l < K; ++l) {
        int row = fg.selector.selected[l];
        if (row >= fg.real_rows) continue;
        Vec3 pos = denormalize(patch.frame, patch.points.row(row).transpose());
        int best = 0;
        double best_d = (gt.points.row(0).transpose() - pos).squaredNorm();
        for (int j = 1; j < gt.points.rows(); ++j) {
            double d = (gt.points.row(j).transpose() - pos).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        real_slots.push_back(l);
        corr.push_back(best);
    }
    ad::Var gt_weights = tape.scatter_add_rows(tape.gather_rows(fg.sel_weights, real_slots), corr,
                                               static_cast<int>(gt.points.rows()));

    ad::Var lp = point_denoise_loss(tape, fg.denoised, gt, loss_cfg, cache.radius);
    ad::Var ln = normal_filter_loss(tape, fg.normal, gt.center_normal);
    ad::Var lo = orthogonality_loss(tape, fg.denoised, fg.normal, gt, gt_weights);
    ad::Var total = joint_loss(tape, lp, ln, lo, loss_cfg);

    StepStats stats;
    stats.loss_point = tape.scalar(lp);
    stats.loss_normal = tape.scalar(ln);
    stats.loss_ortho = tape.scalar(lo);
    stats.loss = tape.scalar(total);
    if (!std::isfinite(stats.loss)) return stats;  // caller aborts with diagnostics

    tape.backward(total);
    return stats;
}

std::string nonfinite_diagnostic(const StepStats& s, int batch_index) {
    std::string term = "joint";
    if (!std::isfinite(s.loss_point)) term = "L_point";
    else if (!std::isfinite(s.loss_normal)) term = "L_normal";
    else if (!std::isfinite(s.loss_ortho)) term = "L_ortho";
    return "train: non-finite " + term + " in batch " + std::to_string(batch_index);
}

}  // namespace

TrainResult train(const std::vector<NoisySample>& dataset, const TrainConfig& cfg,
                  const NetConfig& net_cfg, const LossConfig& loss_cfg,
                  std::optional<ParamSet> initial) {
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
    for (const NoisySample& s : dataset)
        if (!s.noisy.has_normals() || !s.clean.has_normals())
            throw std::invalid_argument("train: samples must carry normals");

    TrainResult result;
    if (initial) {
        result.params = std::move(*initial);
    } else {
        result.params = make_network_params();
        result.params.init_fan_in(mix_seed(cfg.seed, 0x1217));
    }
    std::vector<Mat> velocity = result.params.zeros_like();

    std::vector<SampleCache> caches(dataset.size());
    for (size_t s = 0; s < dataset.size(); ++s) {
        caches[s].noisy_tree = std::make_unique<KdTree3>(dataset[s].noisy.points);
        caches[s].clean_tree = std::make_unique<KdTree3>(dataset[s].clean.points);
        caches[s].radius = cfg.patch_radius_frac * dataset[s].noisy.bbox_diag();
    }

    int workers = cfg.workers > 0 ? cfg.workers
                                  : std::max(1u, std::thread::hardware_concurrency());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);

        std::vector<std::pair<int, int>> plan;
        if (!cfg.fixed_centers.empty()) {
            plan = cfg.fixed_centers;
        } else {
            Rng rng(mix_seed(cfg.seed, 0xE70C, static_cast<uint64_t>(epoch)));
            for (size_t s = 0; s < dataset.size(); ++s)
                for (int t = 0; t < cfg.centers_per_cloud; ++t)
                    plan.push_back({static_cast<int>(s), rng.uniform_int(dataset[s].noisy.size())});
            rng.shuffle(plan);
        }

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        int steps_in_epoch = 0;

        for (size_t at = 0; at < plan.size(); at += cfg.batch_size) {
            const int batch_n =
                static_cast<int>(std::min<size_t>(cfg.batch_size, plan.size() - at));
            const double weight = 1.0 / batch_n;
            const int batch_index = static_cast<int>(at / cfg.batch_size);

            const int active = std::min(workers, batch_n);
            std::vector<std::vector<Mat>> worker_grads(active);
            std::vector<StepStats> worker_stats(active);
            std::vector<std::string> worker_errors(active);

            auto run_range = [&](int w, int lo, int hi) {
                worker_grads[w] = result.params.zeros_like();
                for (int i = lo; i < hi; ++i) {
                    auto [s, center] = plan[at + i];
                    uint64_t patch_seed = mix_seed(cfg.seed, static_cast<uint64_t>(s),
                                                   static_cast<uint64_t>(center));
                    StepStats st = patch_gradient(dataset[s], caches[s], center, patch_seed, cfg,
                                                  net_cfg, loss_cfg, result.params,
                                                  worker_grads[w]);
                    if (!std::isfinite(st.loss)) {
                        worker_errors[w] = nonfinite_diagnostic(st, batch_index);
                        return;
                    }
                    worker_stats[w].loss += weight * st.loss;
                    worker_stats[w].loss_point += weight * st.loss_point;
                    worker_stats[w].loss_normal += weight * st.loss_normal;
                    worker_stats[w].loss_ortho += weight * st.loss_ortho;
                }
            };

            if (active == 1) {
                run_range(0, 0, batch_n);
            } else {
                std::vector<std::thread> threads;
                for (int w = 0; w < active; ++w) {
                    int lo = batch_n * w / active;
                    int hi = batch_n * (w + 1) / active;
                    threads.emplace_back(run_range, w, lo, hi);
                }
                for (std::thread& t : threads) t.join();
            }

            for (int w = 0; w < active; ++w)
                if (!worker_errors[w].empty()) throw std::runtime_error(worker_errors[w]);

            std::vector<Mat> grads = std::move(worker_grads[0]);
            StepStats step = worker_stats[0];
            for (int w = 1; w < active; ++w) {
                for (size_t i = 0; i < grads.size(); ++i) grads[i] += worker_grads[w][i];
                step.loss += worker_stats[w].loss;
                step.loss_point += worker_stats[w].loss_point;
                step.loss_normal += worker_stats[w].loss_normal;
                step.loss_ortho += worker_stats[w].loss_ortho;
            }

            // single-writer parameter update on the batch-mean gradient
            for (int i = 0; i < result.params.count(); ++i) {
                velocity[i] = cfg.momentum * velocity[i] + weight * grads[i];
                result.params.tensor(i) -= lr * velocity[i];
            }

            result.steps.push_back(step);
            es.loss += step.loss;
            es.loss_point += step.loss_point;
            es.loss_normal += step.loss_normal;
            es.loss_ortho += step.loss_ortho;
            ++steps_in_epoch;
        }

        if (steps_in_epoch > 0) {
            es.loss /= steps_in_epoch;
            es.loss_point /= steps_in_epoch;
            es.loss_normal /= steps_in_epoch;
            es.loss_ortho /= steps_in_epoch;
        }
        result.history.push_back(es);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            result.params.save(cfg.checkpoint_path);
    }

    if (!cfg.checkpoint_path.empty()) result.params.save(cfg.checkpoint_path);
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
    std::fprintf(f, "epoch,lr,loss,L_point,L_normal,L_ortho\n");
    for (const EpochStats& e : history)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.loss, e.loss_point,
                     e.loss_normal, e.loss_ortho);
    std::fclose(f);
}

}  // namespace pcdnf
