#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "filmgen/nn.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return FILMGEN_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "data"; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    std::random_device rd;
    auto dir = std::filesystem::temp_directory_path() / ("filmgen-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

/// Largest relative error between the analytic gradients stored in `params`
/// and central differences of `loss` with step h. Scale is max(|a|, |n|, floor).
inline double fd_check(const std::vector<filmgen::nn::ParamTensor*>& params, const std::function<double()>& loss,
                       double h = 1e-5, double floor = 1e-6) {
    double worst = 0.0;
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + h;
            const double up = loss();
            p->value[i] = keep - h;
            const double down = loss();
            p->value[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = p->grad[i];
            const double scale = std::max({std::abs(numeric), std::abs(analytic), floor});
            worst = std::max(worst, std::abs(numeric - analytic) / scale);
        }
    }
    return worst;
}

}  // namespace testing
