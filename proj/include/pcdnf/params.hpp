#pragma once

#include "pcdnf/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace pcdnf {

// Named parameter tensors in a fixed creation order. The order is part of
// the artifact: it pins initialization, gradient layout, and checkpoint
// bytes.
class ParamSet {
public:
    Mat& emplace(const std::string& name, int rows, int cols);
    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    int index_of(const std::string& name) const;

    int count() const { return static_cast<int>(tensors_.size()); }
    const std::string& name(int i) const { return names_[i]; }
    Mat& tensor(int i) { return tensors_[i]; }
    const Mat& tensor(int i) const { return tensors_[i]; }

    long total_size() const;
    bool all_finite() const;

    // fan-in scaled uniform weights, zero biases (a "bias" is any 1-row tensor)
    void init_fan_in(uint64_t seed);

    std::vector<Mat> zeros_like() const;

    void save(const std::string& path) const;
    static ParamSet load(const std::string& path);

private:
    std::vector<std::string> names_;
    std::vector<Mat> tensors_;
    std::map<std::string, int> index_;
};

ParamSet make_network_params();  // all tensors of the denoising network

}  // namespace pcdnf
