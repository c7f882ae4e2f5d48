#include "knowid/mat.hpp"

#include <algorithm>
#include <cmath>

namespace knowid::nn {

double l2_norm(const Mat& m) {
    double s = 0.0;
    for (double v : m.a) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Mat& x, const Mat& y) {
    assert(x.same_shape(y));
    double d = 0.0;
    for (size_t i = 0; i < x.a.size(); ++i) d = std::max(d, std::fabs(x.a[i] - y.a[i]));
    return d;
}

void fill_uniform(Mat& m, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : m.a) v = dist(rng);
}

void fill_gaussian(Mat& m, double mean, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(mean, stddev);
    for (double& v : m.a) v = dist(rng);
}

}  // namespace knowid::nn
