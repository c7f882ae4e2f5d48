#include "knowid/params.hpp"

#include <cmath>
#include <stdexcept>

namespace knowid::nn {

Mat& ParamStore::add(const std::string& name, Mat init, bool decay) {
    if (has(name)) throw std::logic_error("duplicate parameter: " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(init), decay});
    return entries_.back().value;
}

Mat& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return entries_[it->second].value;
}

const Mat& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return entries_[it->second].value;
}

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

int ParamBinding::operator()(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    const Mat& v = store_->get(name);
    const int id = trainable_ ? g_->leaf(v) : g_->constant(v);
    ids_[name] = id;
    return id;
}

void ParamBinding::accumulate_grads(std::unordered_map<std::string, Mat>& acc, double scale) const {
    for (const auto& [name, id] : ids_) {
        const Mat& g = g_->grad(id);
        if (g.empty()) continue;
        auto [it, inserted] = acc.try_emplace(name, Mat(g.rows, g.cols));
        Mat& dst = it->second;
        for (size_t i = 0; i < g.a.size(); ++i) dst.a[i] += scale * g.a[i];
    }
}

double AdamW::lr_at(long step) const {
    const long warmup = std::min(opt_.warmup_steps, opt_.total_steps);
    if (warmup > 0 && step <= warmup)
        return opt_.lr_max * static_cast<double>(step) / static_cast<double>(warmup);
    if (opt_.total_steps <= warmup) return opt_.lr_max;
    const double frac = static_cast<double>(opt_.total_steps - step) /
                        static_cast<double>(opt_.total_steps - warmup);
    return opt_.lr_max * std::max(0.0, frac);
}

void AdamW::step(ParamStore& params, const std::unordered_map<std::string, Mat>& grads) {
    ++t_;
    const double lr = lr_at(t_);
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& e : params.entries()) {
        auto git = grads.find(e.name);
        if (git == grads.end()) continue;
        const Mat& g = git->second;
        Mat& m = m_.try_emplace(e.name, Mat(g.rows, g.cols)).first->second;
        Mat& v = v_.try_emplace(e.name, Mat(g.rows, g.cols)).first->second;
        for (size_t i = 0; i < g.a.size(); ++i) {
            m.a[i] = opt_.beta1 * m.a[i] + (1.0 - opt_.beta1) * g.a[i];
            v.a[i] = opt_.beta2 * v.a[i] + (1.0 - opt_.beta2) * g.a[i] * g.a[i];
            const double mhat = m.a[i] / bc1;
            const double vhat = v.a[i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + opt_.eps);
            if (e.decay) upd += opt_.weight_decay * e.value.a[i];
            e.value.a[i] -= lr * upd;
        }
    }
}

}  // namespace knowid::nn
