#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "knowid/graph.hpp"
#include "knowid/mat.hpp"

namespace knowid::nn {

// Named model parameters in registration order. Registration order is the
// iteration order everywhere (init, optimizer, checkpoints), which keeps
// runs with equal seeds bit-identical.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Mat value;
        bool decay = true;  // excluded for layer-norm gains and biases
    };

    Mat& add(const std::string& name, Mat init, bool decay = true);
    Mat& get(const std::string& name);
    const Mat& get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    size_t scalar_count() const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Lazily binds store entries to leaves of one Graph. With trainable=false the
// entries become constants, which prunes the backward pass (used for the
// adversarial inner loop and for inference).
class ParamBinding {
public:
    ParamBinding(Graph& g, const ParamStore& store, bool trainable)
        : g_(&g), store_(&store), trainable_(trainable) {}

    int operator()(const std::string& name);

    // Folds scale * d(loss)/d(param) into acc for every bound entry.
    void accumulate_grads(std::unordered_map<std::string, Mat>& acc, double scale) const;

private:
    Graph* g_;
    const ParamStore* store_;
    bool trainable_;
    std::unordered_map<std::string, int> ids_;
};

// Decoupled weight decay Adam. lr_at implements linear warmup to lr_max at
// warmup_steps, then linear decay to zero at total_steps (1-based step index).
class AdamW {
public:
    struct Options {
        double lr_max = 3e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
        long warmup_steps = 1000;
        long total_steps = 1;
    };

    explicit AdamW(Options opt) : opt_(opt) {}

    double lr_at(long step) const;
    long steps_taken() const { return t_; }
    void step(ParamStore& params, const std::unordered_map<std::string, Mat>& grads);

private:
    Options opt_;
    long t_ = 0;
    std::unordered_map<std::string, Mat> m_, v_;
};

}  // namespace knowid::nn
