#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace spectranet {

struct MeanStd {
    double mean = 0, std = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= double(v.size());
    for (double x : v) m.std += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(m.std / double(v.size()));
    return m;
}

/// Nearest-rank quantile: sorted[ceil(p n) - 1].
inline double nearest_rank(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("nearest_rank: empty sample");
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p * double(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace spectranet
