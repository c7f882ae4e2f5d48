#pragma once

#include <functional>
#include <span>
#include <vector>

#include "knowid/mat.hpp"

namespace knowid::nn {

// Reverse-mode autodiff tape over Mat values.
//
// Node ids index into the tape and ops may only reference earlier ids, so a
// single reverse sweep over the tape is a valid topological backward pass.
// A fresh Graph is built per forward; nothing is reused across steps, which
// keeps evaluation order fixed and runs bit-reproducible for a given seed.
class Graph {
public:
    // Leaf without gradient tracking (masks, detached logits, data).
    int constant(Mat v);
    // Leaf with gradient tracking (parameters, adversarial perturbations).
    int leaf(Mat v);

    int add(int x, int y);        // same shape
    int sub(int x, int y);        // same shape
    int hadamard(int x, int y);   // same shape, elementwise product
    int scale(int x, double s);
    int neg(int x) { return scale(x, -1.0); }
    int add_rowvec(int x, int v);   // v: 1 x c, broadcast over rows
    int mul_colvec(int x, int c);   // c: r x 1, broadcast over cols
    int add_scalar(int x, int s);   // s: 1 x 1, broadcast everywhere
    int matmul(int x, int y);
    int transpose(int x);
    int relu(int x);
    int gelu(int x);                // exact erf form
    int sigmoid(int x);
    int log(int x);                 // elementwise, inputs must be > 0
    int softmax_rows(int x);
    int log_softmax_rows(int x);
    int l2_normalize_rows(int x);   // rows with norm < 1e-12 pass through
    int layer_norm_rows(int x, int gain, int bias, double eps);
    int concat_rows(std::span<const int> xs);
    int concat_cols(std::span<const int> xs);
    int slice_cols(int x, int c0, int c1);  // half-open [c0, c1)
    int gather_rows(int x, std::vector<int> idx);
    int sum_all(int x);    // 1 x 1
    int mean_all(int x);   // 1 x 1
    int pick(int x, int r, int c);  // single entry as 1 x 1

    const Mat& val(int id) const { return nodes_[static_cast<size_t>(id)].v; }
    // Zero-shaped Mat until backward touches the node.
    const Mat& grad(int id) const { return grads_[static_cast<size_t>(id)]; }

    // Seeds d(root)/d(root) = 1 and sweeps the tape. root must be 1 x 1.
    void backward(int root);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat v;
        bool needs_grad = false;
        std::function<void(Graph&, int)> back;  // empty for leaves
    };

    std::vector<Node> nodes_;
    std::vector<Mat> grads_;

    int push(Mat v, bool needs_grad, std::function<void(Graph&, int)> back);
    bool needs(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    Mat& grad_buf(int id);
    void accumulate(int id, const Mat& g);
};

// Central finite difference of f at x with step h, used by the test oracles.
double central_diff(const std::function<double(double)>& f, double x, double h);

}  // namespace knowid::nn
