#pragma once

#include <cassert>
#include <cstddef>
#include <random>
#include <vector>

namespace knowid::nn {

// Dense row-major matrix of doubles. Row and column vectors are 1xN / Nx1.
// Double precision throughout: the gradient checks compare against central
// finite differences at 1e-4 relative error, which single precision cannot hit.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat row_vec(std::vector<double> v) {
        Mat m;
        m.rows = 1;
        m.cols = static_cast<int>(v.size());
        m.a = std::move(v);
        return m;
    }
};

double l2_norm(const Mat& m);
double max_abs_diff(const Mat& x, const Mat& y);

void fill_uniform(Mat& m, double lo, double hi, std::mt19937_64& rng);
void fill_gaussian(Mat& m, double mean, double stddev, std::mt19937_64& rng);

}  // namespace knowid::nn
