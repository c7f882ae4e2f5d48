#include "knowid/graph.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace knowid::nn {

namespace {

constexpr double kNormGuard = 1e-12;

void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

int Graph::push(Mat v, bool needs_grad, std::function<void(Graph&, int)> back) {
    nodes_.push_back(Node{std::move(v), needs_grad, std::move(back)});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

Mat& Graph::grad_buf(int id) {
    Mat& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) g = Mat(val(id).rows, val(id).cols);
    return g;
}

void Graph::accumulate(int id, const Mat& g) {
    if (!needs(id)) return;
    Mat& dst = grad_buf(id);
    for (size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += g.a[i];
}

int Graph::constant(Mat v) { return push(std::move(v), false, {}); }

int Graph::leaf(Mat v) { return push(std::move(v), true, {}); }

int Graph::add(int x, int y) {
    check(val(x).same_shape(val(y)), "add: shape mismatch");
    Mat out = val(x);
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] += val(y).a[i];
    return push(std::move(out), needs(x) || needs(y), [x, y](Graph& g, int self) {
        g.accumulate(x, g.grad(self));
        g.accumulate(y, g.grad(self));
    });
}

int Graph::sub(int x, int y) {
    check(val(x).same_shape(val(y)), "sub: shape mismatch");
    Mat out = val(x);
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] -= val(y).a[i];
    return push(std::move(out), needs(x) || needs(y), [x, y](Graph& g, int self) {
        g.accumulate(x, g.grad(self));
        if (!g.needs(y)) return;
        const Mat& dg = g.grad(self);
        Mat& gy = g.grad_buf(y);
        for (size_t i = 0; i < gy.a.size(); ++i) gy.a[i] -= dg.a[i];
    });
}

int Graph::hadamard(int x, int y) {
    check(val(x).same_shape(val(y)), "hadamard: shape mismatch");
    Mat out = val(x);
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= val(y).a[i];
    return push(std::move(out), needs(x) || needs(y), [x, y](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        if (g.needs(x)) {
            Mat& gx = g.grad_buf(x);
            for (size_t i = 0; i < gx.a.size(); ++i) gx.a[i] += dg.a[i] * g.val(y).a[i];
        }
        if (g.needs(y)) {
            Mat& gy = g.grad_buf(y);
            for (size_t i = 0; i < gy.a.size(); ++i) gy.a[i] += dg.a[i] * g.val(x).a[i];
        }
    });
}

int Graph::scale(int x, double s) {
    Mat out = val(x);
    for (double& v : out.a) v *= s;
    return push(std::move(out), needs(x), [x, s](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (size_t i = 0; i < gx.a.size(); ++i) gx.a[i] += s * dg.a[i];
    });
}

int Graph::add_rowvec(int x, int v) {
    check(val(v).rows == 1 && val(v).cols == val(x).cols, "add_rowvec: want 1 x cols(x)");
    Mat out = val(x);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += val(v).at(0, c);
    return push(std::move(out), needs(x) || needs(v), [x, v](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        g.accumulate(x, dg);
        if (!g.needs(v)) return;
        Mat& gv = g.grad_buf(v);
        for (int r = 0; r < dg.rows; ++r)
            for (int c = 0; c < dg.cols; ++c) gv.at(0, c) += dg.at(r, c);
    });
}

int Graph::mul_colvec(int x, int c) {
    check(val(c).cols == 1 && val(c).rows == val(x).rows, "mul_colvec: want rows(x) x 1");
    Mat out = val(x);
    for (int r = 0; r < out.rows; ++r)
        for (int j = 0; j < out.cols; ++j) out.at(r, j) *= val(c).at(r, 0);
    return push(std::move(out), needs(x) || needs(c), [x, c](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        if (g.needs(x)) {
            Mat& gx = g.grad_buf(x);
            for (int r = 0; r < dg.rows; ++r)
                for (int j = 0; j < dg.cols; ++j) gx.at(r, j) += dg.at(r, j) * g.val(c).at(r, 0);
        }
        if (g.needs(c)) {
            Mat& gc = g.grad_buf(c);
            for (int r = 0; r < dg.rows; ++r) {
                double s = 0.0;
                for (int j = 0; j < dg.cols; ++j) s += dg.at(r, j) * g.val(x).at(r, j);
                gc.at(r, 0) += s;
            }
        }
    });
}

int Graph::add_scalar(int x, int s) {
    check(val(s).rows == 1 && val(s).cols == 1, "add_scalar: want 1 x 1");
    Mat out = val(x);
    const double sv = val(s).at(0, 0);
    for (double& v : out.a) v += sv;
    return push(std::move(out), needs(x) || needs(s), [x, s](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        g.accumulate(x, dg);
        if (!g.needs(s)) return;
        double total = 0.0;
        for (double v : dg.a) total += v;
        g.grad_buf(s).at(0, 0) += total;
    });
}

int Graph::matmul(int x, int y) {
    const Mat& A = val(x);
    const Mat& B = val(y);
    check(A.cols == B.rows, "matmul: inner dims differ");
    Mat out(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[static_cast<size_t>(i) * A.cols];
        double* orow = &out.a[static_cast<size_t>(i) * out.cols];
        for (int k = 0; k < A.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &B.a[static_cast<size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return push(std::move(out), needs(x) || needs(y), [x, y](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        const Mat& A = g.val(x);
        const Mat& B = g.val(y);
        if (g.needs(x)) {  // dA = dC * B^T
            Mat& gx = g.grad_buf(x);
            for (int i = 0; i < A.rows; ++i)
                for (int j = 0; j < B.cols; ++j) {
                    const double dv = dg.at(i, j);
                    if (dv == 0.0) continue;
                    for (int k = 0; k < A.cols; ++k) gx.at(i, k) += dv * B.at(k, j);
                }
        }
        if (g.needs(y)) {  // dB = A^T * dC
            Mat& gy = g.grad_buf(y);
            for (int i = 0; i < A.rows; ++i)
                for (int k = 0; k < A.cols; ++k) {
                    const double av = A.at(i, k);
                    if (av == 0.0) continue;
                    for (int j = 0; j < B.cols; ++j) gy.at(k, j) += av * dg.at(i, j);
                }
        }
    });
}

int Graph::transpose(int x) {
    const Mat& X = val(x);
    Mat out(X.cols, X.rows);
    for (int r = 0; r < X.rows; ++r)
        for (int c = 0; c < X.cols; ++c) out.at(c, r) = X.at(r, c);
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (int r = 0; r < gx.rows; ++r)
            for (int c = 0; c < gx.cols; ++c) gx.at(r, c) += dg.at(c, r);
    });
}

int Graph::relu(int x) {
    Mat out = val(x);
    for (double& v : out.a) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (size_t i = 0; i < gx.a.size(); ++i)
            if (g.val(x).a[i] > 0.0) gx.a[i] += dg.a[i];
    });
}

int Graph::gelu(int x) {
    Mat out = val(x);
    for (double& v : out.a) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (size_t i = 0; i < gx.a.size(); ++i) {
            const double v = g.val(x).a[i];
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            gx.a[i] += dg.a[i] * (cdf + v * pdf);
        }
    });
}

int Graph::sigmoid(int x) {
    Mat out = val(x);
    for (double& v : out.a) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        const Mat& y = g.val(self);
        Mat& gx = g.grad_buf(x);
        for (size_t i = 0; i < gx.a.size(); ++i) gx.a[i] += dg.a[i] * y.a[i] * (1.0 - y.a[i]);
    });
}

int Graph::log(int x) {
    Mat out = val(x);
    for (double& v : out.a) v = std::log(v);
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (size_t i = 0; i < gx.a.size(); ++i) gx.a[i] += dg.a[i] / g.val(x).a[i];
    });
}

int Graph::softmax_rows(int x) {
    Mat out = val(x);
    for (int r = 0; r < out.rows; ++r) {
        double mx = out.at(r, 0);
        for (int c = 1; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
        double z = 0.0;
        for (int c = 0; c < out.cols; ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            z += out.at(r, c);
        }
        for (int c = 0; c < out.cols; ++c) out.at(r, c) /= z;
    }
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        const Mat& y = g.val(self);
        Mat& gx = g.grad_buf(x);
        for (int r = 0; r < y.rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < y.cols; ++c) dot += dg.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols; ++c) gx.at(r, c) += y.at(r, c) * (dg.at(r, c) - dot);
        }
    });
}

int Graph::log_softmax_rows(int x) {
    Mat out = val(x);
    for (int r = 0; r < out.rows; ++r) {
        double mx = out.at(r, 0);
        for (int c = 1; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
        double z = 0.0;
        for (int c = 0; c < out.cols; ++c) z += std::exp(out.at(r, c) - mx);
        const double lse = mx + std::log(z);
        for (int c = 0; c < out.cols; ++c) out.at(r, c) -= lse;
    }
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        const Mat& y = g.val(self);
        Mat& gx = g.grad_buf(x);
        for (int r = 0; r < y.rows; ++r) {
            double total = 0.0;
            for (int c = 0; c < y.cols; ++c) total += dg.at(r, c);
            for (int c = 0; c < y.cols; ++c)
                gx.at(r, c) += dg.at(r, c) - std::exp(y.at(r, c)) * total;
        }
    });
}

int Graph::l2_normalize_rows(int x) {
    const Mat& X = val(x);
    Mat out = X;
    std::vector<double> norms(static_cast<size_t>(X.rows), 0.0);
    for (int r = 0; r < X.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < X.cols; ++c) s += X.at(r, c) * X.at(r, c);
        const double n = std::sqrt(s);
        norms[static_cast<size_t>(r)] = n;
        if (n >= kNormGuard)
            for (int c = 0; c < X.cols; ++c) out.at(r, c) /= n;
    }
    return push(std::move(out), needs(x), [x, norms](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        const Mat& y = g.val(self);
        Mat& gx = g.grad_buf(x);
        for (int r = 0; r < y.rows; ++r) {
            const double n = norms[static_cast<size_t>(r)];
            if (n < kNormGuard) {  // passed through unchanged
                for (int c = 0; c < y.cols; ++c) gx.at(r, c) += dg.at(r, c);
                continue;
            }
            double dot = 0.0;
            for (int c = 0; c < y.cols; ++c) dot += dg.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols; ++c)
                gx.at(r, c) += (dg.at(r, c) - y.at(r, c) * dot) / n;
        }
    });
}

int Graph::layer_norm_rows(int x, int gain, int bias, double eps) {
    const Mat& X = val(x);
    check(val(gain).rows == 1 && val(gain).cols == X.cols, "layer_norm: gain shape");
    check(val(bias).rows == 1 && val(bias).cols == X.cols, "layer_norm: bias shape");
    Mat out(X.rows, X.cols);
    Mat xhat(X.rows, X.cols);
    std::vector<double> inv_std(static_cast<size_t>(X.rows));
    for (int r = 0; r < X.rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < X.cols; ++c) mean += X.at(r, c);
        mean /= X.cols;
        double var = 0.0;
        for (int c = 0; c < X.cols; ++c) {
            const double d = X.at(r, c) - mean;
            var += d * d;
        }
        var /= X.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int c = 0; c < X.cols; ++c) {
            xhat.at(r, c) = (X.at(r, c) - mean) * inv;
            out.at(r, c) = val(gain).at(0, c) * xhat.at(r, c) + val(bias).at(0, c);
        }
    }
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [x, gain, bias, xhat, inv_std](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        const int cols = dg.cols;
        if (g.needs(gain)) {
            Mat& gg = g.grad_buf(gain);
            for (int r = 0; r < dg.rows; ++r)
                for (int c = 0; c < cols; ++c) gg.at(0, c) += dg.at(r, c) * xhat.at(r, c);
        }
        if (g.needs(bias)) {
            Mat& gb = g.grad_buf(bias);
            for (int r = 0; r < dg.rows; ++r)
                for (int c = 0; c < cols; ++c) gb.at(0, c) += dg.at(r, c);
        }
        if (g.needs(x)) {
            Mat& gx = g.grad_buf(x);
            for (int r = 0; r < dg.rows; ++r) {
                double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
                for (int c = 0; c < cols; ++c) {
                    const double dxh = dg.at(r, c) * g.val(gain).at(0, c);
                    m1 += dxh;
                    m2 += dxh * xhat.at(r, c);
                }
                m1 /= cols;
                m2 /= cols;
                const double inv = inv_std[static_cast<size_t>(r)];
                for (int c = 0; c < cols; ++c) {
                    const double dxh = dg.at(r, c) * g.val(gain).at(0, c);
                    gx.at(r, c) += inv * (dxh - m1 - xhat.at(r, c) * m2);
                }
            }
        }
    });
}

int Graph::concat_rows(std::span<const int> xs) {
    check(!xs.empty(), "concat_rows: empty");
    const int cols = val(xs[0]).cols;
    int rows = 0;
    bool ng = false;
    for (int id : xs) {
        check(val(id).cols == cols, "concat_rows: col mismatch");
        rows += val(id).rows;
        ng = ng || needs(id);
    }
    Mat out(rows, cols);
    int r0 = 0;
    for (int id : xs) {
        const Mat& X = val(id);
        for (int r = 0; r < X.rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(r0 + r, c) = X.at(r, c);
        r0 += X.rows;
    }
    std::vector<int> parts(xs.begin(), xs.end());
    return push(std::move(out), ng, [parts](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        int r0 = 0;
        for (int id : parts) {
            const int nr = g.val(id).rows;
            if (g.needs(id)) {
                Mat& gx = g.grad_buf(id);
                for (int r = 0; r < nr; ++r)
                    for (int c = 0; c < dg.cols; ++c) gx.at(r, c) += dg.at(r0 + r, c);
            }
            r0 += nr;
        }
    });
}

int Graph::concat_cols(std::span<const int> xs) {
    check(!xs.empty(), "concat_cols: empty");
    const int rows = val(xs[0]).rows;
    int cols = 0;
    bool ng = false;
    for (int id : xs) {
        check(val(id).rows == rows, "concat_cols: row mismatch");
        cols += val(id).cols;
        ng = ng || needs(id);
    }
    Mat out(rows, cols);
    int c0 = 0;
    for (int id : xs) {
        const Mat& X = val(id);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < X.cols; ++c) out.at(r, c0 + c) = X.at(r, c);
        c0 += X.cols;
    }
    std::vector<int> parts(xs.begin(), xs.end());
    return push(std::move(out), ng, [parts](Graph& g, int self) {
        const Mat& dg = g.grad(self);
        int c0 = 0;
        for (int id : parts) {
            const int nc = g.val(id).cols;
            if (g.needs(id)) {
                Mat& gx = g.grad_buf(id);
                for (int r = 0; r < dg.rows; ++r)
                    for (int c = 0; c < nc; ++c) gx.at(r, c) += dg.at(r, c0 + c);
            }
            c0 += nc;
        }
    });
}

int Graph::slice_cols(int x, int c0, int c1) {
    const Mat& X = val(x);
    check(0 <= c0 && c0 < c1 && c1 <= X.cols, "slice_cols: bad range");
    Mat out(X.rows, c1 - c0);
    for (int r = 0; r < X.rows; ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = X.at(r, c);
    return push(std::move(out), needs(x), [x, c0](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (int r = 0; r < dg.rows; ++r)
            for (int c = 0; c < dg.cols; ++c) gx.at(r, c0 + c) += dg.at(r, c);
    });
}

int Graph::gather_rows(int x, std::vector<int> idx) {
    const Mat& X = val(x);
    Mat out(static_cast<int>(idx.size()), X.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        check(idx[i] >= 0 && idx[i] < X.rows, "gather_rows: index out of range");
        for (int c = 0; c < X.cols; ++c) out.at(static_cast<int>(i), c) = X.at(idx[i], c);
    }
    return push(std::move(out), needs(x), [x, idx = std::move(idx)](Graph& g, int self) {
        if (!g.needs(x)) return;
        const Mat& dg = g.grad(self);
        Mat& gx = g.grad_buf(x);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int c = 0; c < dg.cols; ++c)
                gx.at(idx[i], c) += dg.at(static_cast<int>(i), c);
    });
}

int Graph::sum_all(int x) {
    Mat out(1, 1);
    for (double v : val(x).a) out.at(0, 0) += v;
    return push(std::move(out), needs(x), [x](Graph& g, int self) {
        if (!g.needs(x)) return;
        const double dv = g.grad(self).at(0, 0);
        Mat& gx = g.grad_buf(x);
        for (double& v : gx.a) v += dv;
    });
}

int Graph::mean_all(int x) {
    const double n = static_cast<double>(val(x).size());
    Mat out(1, 1);
    for (double v : val(x).a) out.at(0, 0) += v;
    out.at(0, 0) /= n;
    return push(std::move(out), needs(x), [x, n](Graph& g, int self) {
        if (!g.needs(x)) return;
        const double dv = g.grad(self).at(0, 0) / n;
        Mat& gx = g.grad_buf(x);
        for (double& v : gx.a) v += dv;
    });
}

int Graph::pick(int x, int r, int c) {
    const Mat& X = val(x);
    check(r >= 0 && r < X.rows && c >= 0 && c < X.cols, "pick: index out of range");
    Mat out(1, 1);
    out.at(0, 0) = X.at(r, c);
    return push(std::move(out), needs(x), [x, r, c](Graph& g, int self) {
        if (!g.needs(x)) return;
        g.grad_buf(x).at(r, c) += g.grad(self).at(0, 0);
    });
}

void Graph::backward(int root) {
    check(val(root).rows == 1 && val(root).cols == 1, "backward: root must be scalar");
    grad_buf(root).at(0, 0) = 1.0;
    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || !n.back) continue;
        if (grads_[static_cast<size_t>(id)].empty()) continue;  // not on a path to root
        n.back(*this, id);
    }
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace knowid::nn
