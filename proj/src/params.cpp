#include "pcdnf/params.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace pcdnf {

namespace {
constexpr char kMagic[8] = {'P', 'C', 'D', 'N', 'F', 'C', 'K', '1'};
constexpr uint32_t kFormatVersion = 1;
}  // namespace

Mat& ParamSet::emplace(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate tensor name: " + name);
    index_[name] = static_cast<int>(tensors_.size());
    names_.push_back(name);
    tensors_.push_back(Mat::Zero(rows, cols));
    return tensors_.back();
}

Mat& ParamSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
}

const Mat& ParamSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return tensors_[it->second];
}

int ParamSet::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
    return it->second;
}

long ParamSet::total_size() const {
    long total = 0;
    for (const Mat& t : tensors_) total += t.size();
    return total;
}

bool ParamSet::all_finite() const {
    for (const Mat& t : tensors_)
        if (!t.allFinite()) return false;
    return true;
}

void ParamSet::init_fan_in(uint64_t seed) {
    Rng rng(seed);
    // uniform bound sqrt(3/fan_in) keeps activation variance steady through
    // depth; the extra gain compensates the leaky rectifier (slope 0.1)
    const double gain = std::sqrt(2.0 / (1.0 + 0.1 * 0.1));
    for (size_t i = 0; i < tensors_.size(); ++i) {
        Mat& t = tensors_[i];
        if (names_[i].ends_with(".b")) {  // biases start at zero
            t.setZero();
            continue;
        }
        double bound = gain * std::sqrt(3.0 / static_cast<double>(t.rows()));
        for (int r = 0; r < t.rows(); ++r)
            for (int c = 0; c < t.cols(); ++c) t(r, c) = rng.uniform(-bound, bound);
    }
}

std::vector<Mat> ParamSet::zeros_like() const {
    std::vector<Mat> out;
    out.reserve(tensors_.size());
    for (const Mat& t : tensors_) out.push_back(Mat::Zero(t.rows(), t.cols()));
    return out;
}

void ParamSet::save(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("ParamSet::save: cannot open " + path);
    std::fwrite(kMagic, 1, sizeof(kMagic), f);
    uint32_t version = kFormatVersion;
    uint32_t count = static_cast<uint32_t>(tensors_.size());
    std::fwrite(&version, sizeof(version), 1, f);
    std::fwrite(&count, sizeof(count), 1, f);
    for (size_t i = 0; i < tensors_.size(); ++i) {
        uint32_t len = static_cast<uint32_t>(names_[i].size());
        std::fwrite(&len, sizeof(len), 1, f);
        std::fwrite(names_[i].data(), 1, len, f);
        uint64_t rows = static_cast<uint64_t>(tensors_[i].rows());
        uint64_t cols = static_cast<uint64_t>(tensors_[i].cols());
        std::fwrite(&rows, sizeof(rows), 1, f);
        std::fwrite(&cols, sizeof(cols), 1, f);
        // row-major on disk
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = tensors_[i];
        std::fwrite(rm.data(), sizeof(double), static_cast<size_t>(rm.size()), f);
    }
    std::fclose(f);
}

ParamSet ParamSet::load(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("ParamSet::load: cannot open " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        std::fclose(f);
        throw std::runtime_error("ParamSet::load: bad magic in " + path);
    }
    uint32_t version = 0, count = 0;
    if (std::fread(&version, sizeof(version), 1, f) != 1 || version != kFormatVersion) {
        std::fclose(f);
        throw std::runtime_error("ParamSet::load: unsupported format version");
    }
    if (std::fread(&count, sizeof(count), 1, f) != 1) {
        std::fclose(f);
        throw std::runtime_error("ParamSet::load: truncated header");
    }
    ParamSet params;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t len = 0;
        if (std::fread(&len, sizeof(len), 1, f) != 1) break;
        std::string name(len, '\0');
        uint64_t rows = 0, cols = 0;
        if (std::fread(name.data(), 1, len, f) != len ||
            std::fread(&rows, sizeof(rows), 1, f) != 1 ||
            std::fread(&cols, sizeof(cols), 1, f) != 1) {
            std::fclose(f);
            throw std::runtime_error("ParamSet::load: truncated tensor header");
        }
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
        if (std::fread(rm.data(), sizeof(double), static_cast<size_t>(rm.size()), f) !=
            static_cast<size_t>(rm.size())) {
            std::fclose(f);
            throw std::runtime_error("ParamSet::load: truncated tensor data");
        }
        params.emplace(name, static_cast<int>(rows), static_cast<int>(cols)) = rm;
    }
    std::fclose(f);
    return params;
}

namespace {

void add_linear(ParamSet& p, const std::string& prefix, int in, int out) {
    p.emplace(prefix + ".w", in, out);
    p.emplace(prefix + ".b", 1, out);
}

void add_extractor_stream(ParamSet& p, const std::string& stream) {
    const std::string base = "ext." + stream;
    add_linear(p, base + ".ec1.l1", 6, 64);
    add_linear(p, base + ".ec1.l2", 64, 64);
    add_linear(p, base + ".ec2.l1", 6, 64);
    add_linear(p, base + ".ec2.l2", 64, 64);
    add_linear(p, base + ".mix", 128, 128);
    add_linear(p, base + ".ec3.l1", 256, 128);
    add_linear(p, base + ".ec3.l2", 128, 128);
    add_linear(p, base + ".out", 128, 128);
}

}  // namespace

ParamSet make_network_params() {
    ParamSet p;
    add_extractor_stream(p, "point");
    add_extractor_stream(p, "normal");

    add_linear(p, "sel.ang", 1, 32);
    add_linear(p, "sel.dist", 1, 32);
    add_linear(p, "sel.fp", 128, 64);
    add_linear(p, "sel.fn", 128, 64);
    add_linear(p, "sel.score.l1", 192, 64);
    add_linear(p, "sel.score.l2", 64, 1);

    add_linear(p, "aug.point", 128, 128);
    add_linear(p, "aug.normal", 128, 128);

    add_linear(p, "dec.disp.l1", 384, 256);
    add_linear(p, "dec.disp.l2", 256, 128);
    add_linear(p, "dec.disp.l3", 128, 3);

    add_linear(p, "dec.norm.in", 384, 256);
    for (int blk = 1; blk <= 3; ++blk) {
        const std::string base = "dec.norm.res" + std::to_string(blk);
        add_linear(p, base + ".a", 256, 256);
        add_linear(p, base + ".b", 256, 256);
    }
    add_linear(p, "dec.norm.out", 256, 3);
    return p;
}

}  // namespace pcdnf
