#include "pcdnf/inference.hpp"
#include "pcdnf/metrics.hpp"
#include "pcdnf/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace pcdnf;

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// resolved configuration echoed into every report for reproducibility
struct ConfigEcho {
    std::map<std::string, std::string> entries;
    void put(const std::string& key, const std::string& v) { entries[key] = v; }
    void put(const std::string& key, double v) { entries[key] = format_double(v); }
    void put(const std::string& key, int v) { entries[key] = std::to_string(v); }
    void put(const std::string& key, uint64_t v) { entries[key] = std::to_string(v); }
    void write(std::FILE* f, const char* prefix) const {
        for (const auto& [k, v] : entries) std::fprintf(f, "%s%s=%s\n", prefix, k.c_str(), v.c_str());
    }
    void echo_stdout() const {
        for (const auto& [k, v] : entries) std::printf("  %s=%s\n", k.c_str(), v.c_str());
    }
};

uint64_t env_seed_fallback() {
    const char* env = std::getenv("PCDNF_SEED");
    return env ? std::strtoull(env, nullptr, 10) : 0;
}

PointCloud load_cloud(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return read_ply(path);
    return read_xyz(path);
}

struct ManifestEntry {
    std::string kind;  // "clean" or "noisy"
    std::string shape;
    std::string file;
    std::string clean_file;
    double level = 0.0;
};

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        ss >> e.kind;
        std::string token;
        while (ss >> token) {
            auto eq = token.find('=');
            if (eq == std::string::npos) continue;
            std::string key = token.substr(0, eq), value = token.substr(eq + 1);
            if (key == "shape") e.shape = value;
            else if (key == "file") e.file = value;
            else if (key == "clean") e.clean_file = value;
            else if (key == "level") e.level = std::strtod(value.c_str(), nullptr);
        }
        entries.push_back(e);
    }
    return entries;
}

int cmd_gen_data(const std::vector<std::string>& shapes, int n_points,
                 const std::vector<double>& levels, uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);

    ConfigEcho echo;
    std::string shape_list;
    for (const auto& s : shapes) shape_list += (shape_list.empty() ? "" : ",") + s;
    std::string level_list;
    for (double l : levels) level_list += (level_list.empty() ? "" : ",") + format_double(l);
    echo.put("command", std::string("gen-data"));
    echo.put("shapes", shape_list);
    echo.put("n-points", n_points);
    echo.put("noise-levels", level_list);
    echo.put("seed", seed);
    echo.put("out-dir", out_dir);

    std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
    std::FILE* manifest = std::fopen(manifest_path.c_str(), "w");
    if (!manifest) throw std::runtime_error("cannot write " + manifest_path);
    std::fprintf(manifest, "# pcdnf manifest format-version 1\n");
    echo.write(manifest, "# ");

    for (size_t si = 0; si < shapes.size(); ++si) {
        ShapeSpec spec;
        spec.kind = shape_kind_from_string(shapes[si]);
        spec.n_points = n_points;
        spec.seed = mix_seed(seed, si, 0xC1EA);
        PointCloud clean = generate_shape(spec);
        std::string clean_name = shapes[si] + "_clean.xyz";
        write_xyz((fs::path(out_dir) / clean_name).string(), clean);
        std::fprintf(manifest, "clean shape=%s n=%d seed=%llu file=%s\n", shapes[si].c_str(),
                     n_points, static_cast<unsigned long long>(spec.seed), clean_name.c_str());

        for (size_t li = 0; li < levels.size(); ++li) {
            uint64_t noise_seed = mix_seed(seed, si, li + 1);
            NoisySample sample = add_gaussian_noise(clean, levels[li], noise_seed);
            std::string noisy_name = shapes[si] + "_noisy_" + format_double(levels[li]) + ".xyz";
            write_xyz((fs::path(out_dir) / noisy_name).string(), sample.noisy);
            std::fprintf(manifest, "noisy shape=%s level=%s seed=%llu clean=%s file=%s\n",
                         shapes[si].c_str(), format_double(levels[li]).c_str(),
                         static_cast<unsigned long long>(noise_seed), clean_name.c_str(),
                         noisy_name.c_str());
        }
    }
    std::fclose(manifest);
    std::printf("gen-data: wrote %zu shapes x %zu levels under %s\n", shapes.size(),
                levels.size(), out_dir.c_str());
    echo.echo_stdout();
    return 0;
}

std::vector<NoisySample> load_dataset(const std::string& data_dir) {
    auto entries = read_manifest((fs::path(data_dir) / "manifest.txt").string());
    std::map<std::string, PointCloud> clean_clouds;
    for (const auto& e : entries)
        if (e.kind == "clean")
            clean_clouds[e.file] = read_xyz((fs::path(data_dir) / e.file).string());

    std::vector<NoisySample> dataset;
    for (const auto& e : entries) {
        if (e.kind != "noisy") continue;
        auto it = clean_clouds.find(e.clean_file);
        if (it == clean_clouds.end())
            throw std::runtime_error("manifest references unknown clean file " + e.clean_file);
        NoisySample sample;
        sample.noisy = read_xyz((fs::path(data_dir) / e.file).string());
        sample.clean = it->second;
        sample.noise_level = e.level;
        dataset.push_back(std::move(sample));
    }
    if (dataset.empty()) throw std::runtime_error("no noisy samples listed in manifest");
    return dataset;
}

ConfigEcho train_echo(const TrainConfig& cfg, const NetConfig& net, const LossConfig& loss) {
    ConfigEcho echo;
    echo.put("epochs", cfg.epochs);
    echo.put("lr-start", cfg.lr_start);
    echo.put("lr-end", cfg.lr_end);
    echo.put("momentum", cfg.momentum);
    echo.put("batch-size", cfg.batch_size);
    echo.put("centers-per-cloud", cfg.centers_per_cloud);
    echo.put("seed", cfg.seed);
    echo.put("workers", cfg.workers);
    echo.put("patch-radius-frac", cfg.patch_radius_frac);
    echo.put("patch-rows", cfg.patch_rows);
    echo.put("k1", net.k1);
    echo.put("k2", net.k2);
    echo.put("k3", net.k3);
    echo.put("k4", net.k4);
    echo.put("top-k", net.top_k);
    echo.put("lambda1", loss.lambda1);
    echo.put("lambda2", loss.lambda2);
    echo.put("lambda3", loss.lambda3);
    echo.put("alpha", loss.alpha);
    echo.put("theta-deg", loss.theta_angle_deg);
    echo.put("sigma-phi", loss.sigma_phi_local);
    return echo;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PCDNF: joint point cloud denoising and normal filtering"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic clean/noisy corpus");
    std::vector<std::string> shapes{"sphere", "cube", "cylinder", "torus", "wedge"};
    std::vector<double> levels{0.0025, 0.005, 0.01, 0.015, 0.025};
    int n_points = 2000;
    uint64_t gen_seed = env_seed_fallback();
    std::string out_dir = "data";
    gen->add_option("--shapes", shapes, "shape kinds")->delimiter(',');
    gen->add_option("--n-points", n_points, "points per shape");
    gen->add_option("--noise-levels", levels, "noise levels (fraction of bbox diagonal)")
        ->delimiter(',');
    gen->add_option("--seed", gen_seed, "global seed");
    gen->add_option("--out-dir", out_dir, "output directory")->required();

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train the network on a generated corpus");
    tr->set_config("--config", "", "flat key=value config file; flags override");
    std::string data_dir, checkpoint_out = "model.ckpt", history_path;
    TrainConfig tcfg;
    tcfg.seed = env_seed_fallback();
    NetConfig net_cfg;
    LossConfig loss_cfg;
    tr->add_option("--data", data_dir, "directory with manifest.txt")->required();
    tr->add_option("--out-checkpoint", checkpoint_out, "checkpoint path");
    tr->add_option("--history", history_path, "training history CSV (default <checkpoint>.history.csv)");
    tr->add_option("--epochs", tcfg.epochs);
    tr->add_option("--lr-start", tcfg.lr_start);
    tr->add_option("--lr-end", tcfg.lr_end);
    tr->add_option("--momentum", tcfg.momentum);
    tr->add_option("--batch-size", tcfg.batch_size);
    tr->add_option("--centers-per-cloud", tcfg.centers_per_cloud);
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--workers", tcfg.workers);
    tr->add_option("--checkpoint-every", tcfg.checkpoint_every);
    tr->add_option("--patch-radius-frac", tcfg.patch_radius_frac);
    tr->add_option("--patch-rows", tcfg.patch_rows);
    tr->add_option("--k1", net_cfg.k1);
    tr->add_option("--k2", net_cfg.k2);
    tr->add_option("--k3", net_cfg.k3);
    tr->add_option("--k4", net_cfg.k4);
    tr->add_option("--top-k", net_cfg.top_k);
    tr->add_option("--lambda1", loss_cfg.lambda1);
    tr->add_option("--lambda2", loss_cfg.lambda2);
    tr->add_option("--lambda3", loss_cfg.lambda3);
    tr->add_option("--alpha", loss_cfg.alpha);
    tr->add_option("--theta-deg", loss_cfg.theta_angle_deg);
    tr->add_option("--sigma-phi", loss_cfg.sigma_phi_local);

    // ---- denoise ----
    auto* dn = app.add_subcommand("denoise", "denoise a cloud and filter its normals");
    std::string in_path, dn_checkpoint, dn_out = "denoised";
    InferenceConfig icfg;
    icfg.seed = env_seed_fallback();
    int dn_k1 = 8, dn_k2 = 16, dn_k3 = 16, dn_k4 = 10, dn_topk = 256;
    dn->add_option("--in", in_path, "input .xyz or binary .ply")->required();
    dn->add_option("--checkpoint", dn_checkpoint, "trained checkpoint")->required();
    dn->add_option("--iterations", icfg.iterations, "refinement iterations");
    dn->add_option("--out", dn_out, "output directory (iter1.xyz .. iterN.xyz)");
    dn->add_option("--seed", icfg.seed);
    dn->add_option("--workers", icfg.workers);
    dn->add_option("--patch-radius-frac", icfg.patch_radius_frac);
    dn->add_option("--patch-rows", icfg.patch_rows);
    dn->add_option("--k1", dn_k1);
    dn->add_option("--k2", dn_k2);
    dn->add_option("--k3", dn_k3);
    dn->add_option("--k4", dn_k4);
    dn->add_option("--top-k", dn_topk);

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate a denoised cloud against ground truth");
    std::string pred_path, clean_path, report_path = "report.csv", shape_name, ev_level = "-";
    int ev_iteration = 1;
    bool ev_append = false;
    ev->add_option("--pred", pred_path)->required();
    ev->add_option("--clean", clean_path)->required();
    ev->add_option("--report", report_path, "CSV report path");
    ev->add_option("--shape", shape_name, "analytic reference shape for P2S");
    ev->add_option("--noise-level", ev_level, "metadata column");
    ev->add_option("--iteration", ev_iteration, "metadata column");
    ev->add_flag("--append", ev_append, "append a row instead of rewriting the report");

    // ---- errormap ----
    auto* em = app.add_subcommand("errormap", "export a normal-angle error map as colored xyz");
    std::string em_pred, em_clean, em_out = "errormap.xyz";
    double em_cap = 30.0;
    em->add_option("--pred", em_pred)->required();
    em->add_option("--clean", em_clean)->required();
    em->add_option("--out", em_out);
    em->add_option("--cap", em_cap, "error (degrees) mapped to pure red");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(shapes, n_points, levels, gen_seed, out_dir);

        if (tr->parsed()) {
            if (history_path.empty()) history_path = checkpoint_out + ".history.csv";
            tcfg.checkpoint_path = checkpoint_out;
            std::vector<NoisySample> dataset = load_dataset(data_dir);
            ConfigEcho echo = train_echo(tcfg, net_cfg, loss_cfg);
            echo.put("command", std::string("train"));
            echo.put("data", data_dir);
            echo.put("out-checkpoint", checkpoint_out);
            std::printf("train: %zu samples\n", dataset.size());
            echo.echo_stdout();

            TrainResult result = train(dataset, tcfg, net_cfg, loss_cfg);
            write_history_csv(history_path, result.history);
            std::FILE* f = std::fopen((checkpoint_out + ".config.txt").c_str(), "w");
            if (f) {
                echo.write(f, "");
                std::fclose(f);
            }
            std::printf("train: final epoch loss %.6g -> %s\n", result.history.back().loss,
                        checkpoint_out.c_str());
            return 0;
        }

        if (dn->parsed()) {
            NetConfig net;
            net.k1 = dn_k1;
            net.k2 = dn_k2;
            net.k3 = dn_k3;
            net.k4 = dn_k4;
            net.top_k = dn_topk;
            PointCloud cloud = load_cloud(in_path);
            ParamSet params = ParamSet::load(dn_checkpoint);
            fs::create_directories(dn_out);

            auto results = denoise_cloud(cloud, params, net, icfg);
            ConfigEcho echo;
            echo.put("command", std::string("denoise"));
            echo.put("in", in_path);
            echo.put("checkpoint", dn_checkpoint);
            echo.put("iterations", icfg.iterations);
            echo.put("seed", icfg.seed);
            echo.put("workers", icfg.workers);
            echo.put("patch-radius-frac", icfg.patch_radius_frac);
            echo.put("patch-rows", icfg.patch_rows);
            echo.put("k1", net.k1);
            echo.put("k2", net.k2);
            echo.put("k3", net.k3);
            echo.put("k4", net.k4);
            echo.put("top-k", net.top_k);
            for (size_t it = 0; it < results.size(); ++it)
                write_xyz((fs::path(dn_out) / ("iter" + std::to_string(it + 1) + ".xyz")).string(),
                          results[it]);
            std::FILE* f = std::fopen((fs::path(dn_out) / "config.txt").string().c_str(), "w");
            if (f) {
                echo.write(f, "");
                std::fclose(f);
            }
            std::printf("denoise: wrote %zu iterations under %s\n", results.size(),
                        dn_out.c_str());
            echo.echo_stdout();
            return 0;
        }

        if (ev->parsed()) {
            PointCloud pred = load_cloud(pred_path);
            PointCloud clean = load_cloud(clean_path);
            double cd = chamfer_distance(pred, clean);
            double p2s = shape_name.empty()
                             ? point_to_surface(pred, clean)
                             : point_to_surface(pred, shape_kind_from_string(shape_name));
            double rmse = (pred.has_normals() && clean.has_normals())
                              ? normal_rmse_deg(pred.normals, clean.normals)
                              : std::numeric_limits<double>::quiet_NaN();

            std::FILE* f = std::fopen(report_path.c_str(), ev_append ? "a" : "w");
            if (!f) throw std::runtime_error("cannot open report " + report_path);
            if (!ev_append) {
                std::fprintf(f, "# pcdnf eval report format-version 1\n");
                std::fprintf(f, "# pred=%s clean=%s shape=%s\n", pred_path.c_str(),
                             clean_path.c_str(), shape_name.empty() ? "-" : shape_name.c_str());
                std::fprintf(f, "# CD = 0.5*mean_a min_b |a-b|^2 + 0.5*mean_b min_a |a-b|^2, "
                                "clouds scaled by 1/diag(clean); P2S normalized by diag(ref); "
                                "RMSE in degrees\n");
                std::fprintf(f, "shape,noise_level,iteration,CD,P2S,RMSE_deg\n");
            }
            std::fprintf(f, "%s,%s,%d,%.17g,%.17g,%.17g\n",
                         shape_name.empty() ? "-" : shape_name.c_str(), ev_level.c_str(),
                         ev_iteration, cd, p2s, rmse);
            std::fclose(f);
            std::printf("eval: CD=%.6g P2S=%.6g RMSE_deg=%.6g -> %s\n", cd, p2s, rmse,
                        report_path.c_str());
            return 0;
        }

        if (em->parsed()) {
            PointCloud pred = load_cloud(em_pred);
            PointCloud clean = load_cloud(em_clean);
            if (!pred.has_normals() || !clean.has_normals())
                throw std::runtime_error("errormap requires normals in both clouds");
            VecX errors = normal_angle_errors_deg(pred.normals, clean.normals);
            export_error_map(em_out, pred, errors, em_cap);
            std::printf("errormap: wrote %s\n", em_out.c_str());
            ConfigEcho echo;
            echo.put("command", std::string("errormap"));
            echo.put("pred", em_pred);
            echo.put("clean", em_clean);
            echo.put("out", em_out);
            echo.put("cap", em_cap);
            echo.echo_stdout();
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pcdnf: %s\n", e.what());
        return 1;
    }
    return 0;
}
