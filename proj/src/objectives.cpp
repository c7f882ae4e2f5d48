#include "knowid/objectives.hpp"

#include <cmath>

#include "knowid/errors.hpp"

namespace knowid::obj {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace

void register_next_heads(nn::ParamStore& store, int d, std::mt19937_64& rng) {
    auto vec = [&](const std::string& name, int rows) {
        nn::Mat m(rows, 1);
        nn::fill_uniform(m, -1.0 / std::sqrt(double(rows)), 1.0 / std::sqrt(double(rows)), rng);
        store.add(name, std::move(m));
    };
    vec("next.wp", d);
    vec("next.wb", 3 * d);
    vec("next.we", 3 * d);
}

void register_history_heads(nn::ParamStore& store, int d, std::mt19937_64& rng) {
    const double b = 1.0 / std::sqrt(double(d));
    auto mat = [&](const std::string& name, int r, int c) {
        nn::Mat m(r, c);
        nn::fill_uniform(m, -b, b, rng);
        store.add(name, std::move(m));
    };
    mat("hist.W", d, d);
    mat("hist.wp", d, 1);
    mat("hist.Wb", d, d);
    mat("hist.We", d, d);
}

std::pair<int, int> NextTurnLogits::passage_su(int global) const {
    for (size_t k = 0; k + 1 < su_offsets.size(); ++k)
        if (global < su_offsets[k + 1]) return {static_cast<int>(k), global - su_offsets[k]};
    throw RuntimeFailure("span index outside the global SU axis");
}

NextTurnLogits next_turn_logits(nn::Graph& g, nn::ParamBinding& bind,
                                std::span<const int> z_nodes, std::span<const int> sdot_nodes) {
    if (z_nodes.empty() || z_nodes.size() != sdot_nodes.size())
        throw RuntimeFailure("next_turn_logits: need one z and one span matrix per passage");

    NextTurnLogits out;
    out.su_offsets.push_back(0);
    for (int sd : sdot_nodes)
        out.su_offsets.push_back(out.su_offsets.back() + g.val(sd).rows);

    const int z_all = g.concat_rows(z_nodes);
    const int s_all = g.concat_rows(sdot_nodes);
    const int wp = bind("next.wp");
    const int wb = bind("next.wb");
    const int we = bind("next.we");
    if (g.val(z_all).cols != g.val(wp).rows)
        throw RuntimeFailure("passage head dimension mismatch: z has " +
                             std::to_string(g.val(z_all).cols) + " columns, w_p has " +
                             std::to_string(g.val(wp).rows) + " rows");
    if (g.val(s_all).cols != g.val(wb).rows)
        throw RuntimeFailure("begin/end head dimension mismatch: spans have " +
                             std::to_string(g.val(s_all).cols) + " columns, w_b has " +
                             std::to_string(g.val(wb).rows) + " rows");
    out.psg = g.transpose(g.matmul(z_all, wp));
    out.begin = g.transpose(g.matmul(s_all, wb));
    out.end = g.transpose(g.matmul(s_all, we));
    return out;
}

double cross_entropy(std::span<const double> logits, int gold) {
    if (gold < 0 || gold >= static_cast<int>(logits.size()))
        throw RuntimeFailure("cross_entropy: gold index out of range");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return -(logits[static_cast<size_t>(gold)] - mx - std::log(z));
}

int cross_entropy_node(nn::Graph& g, int logits_row, int gold) {
    if (gold < 0 || gold >= g.val(logits_row).cols)
        throw RuntimeFailure("cross_entropy: gold index out of range");
    return g.neg(g.pick(g.log_softmax_rows(logits_row), 0, gold));
}

NextLossNodes next_loss(nn::Graph& g, const NextTurnLogits& logits, int gold_passage,
                        int gold_begin_global, int gold_end_global) {
    NextLossNodes out;
    out.psg = cross_entropy_node(g, logits.psg, gold_passage);
    out.begin = cross_entropy_node(g, logits.begin, gold_begin_global);
    out.end = cross_entropy_node(g, logits.end, gold_end_global);
    return out;
}

HistoryLossNodes history_loss(nn::Graph& g, nn::ParamBinding& bind,
                              std::span<const HistoryTurnRef> turns,
                              std::span<const int> s_nodes) {
    HistoryLossNodes out;
    if (turns.empty()) return out;

    const int W = bind("hist.W");
    const int wp = bind("hist.wp");
    const int Wb = bind("hist.Wb");
    const int We = bind("hist.We");

    int psg_sum = -1, begin_sum = -1, end_sum = -1;
    auto accumulate = [&](int& sum, int node) { sum = sum < 0 ? node : g.add(sum, node); };

    for (const HistoryTurnRef& turn : turns) {
        const int u_all = g.concat_rows(turn.u_rows);  // K x d, u_i per passage
        const int psg_logits = g.transpose(g.matmul(g.relu(g.matmul(u_all, W)), wp));
        accumulate(psg_sum, cross_entropy_node(g, psg_logits, turn.gold_passage));

        const int u_gold = turn.u_rows[static_cast<size_t>(turn.gold_passage)];
        const int s_gold = s_nodes[static_cast<size_t>(turn.gold_passage)];
        const int b_log = g.transpose(g.matmul(s_gold, g.transpose(g.matmul(u_gold, Wb))));
        const int e_log = g.transpose(g.matmul(s_gold, g.transpose(g.matmul(u_gold, We))));
        accumulate(begin_sum, cross_entropy_node(g, b_log, turn.begin_su));
        accumulate(end_sum, cross_entropy_node(g, e_log, turn.end_su));
    }

    const double inv = 1.0 / static_cast<double>(turns.size());
    out.psg = g.scale(psg_sum, inv);
    out.begin = g.scale(begin_sum, inv);
    out.end = g.scale(end_sum, inv);
    return out;
}

double js_divergence(std::span<const double> logits_p, std::span<const double> logits_q) {
    if (logits_p.size() != logits_q.size())
        throw RuntimeFailure("js_divergence: length mismatch");
    const std::vector<double> p = softmax(logits_p);
    const std::vector<double> q = softmax(logits_q);
    double js = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        js += 0.5 * p[i] * (std::log(p[i]) - std::log(m));
        js += 0.5 * q[i] * (std::log(q[i]) - std::log(m));
    }
    return std::max(0.0, js);
}

int js_divergence_node(nn::Graph& g, int p_logits, int q_logits) {
    const int P = g.softmax_rows(p_logits);
    const int Q = g.softmax_rows(q_logits);
    const int M = g.scale(g.add(P, Q), 0.5);
    const int log_m = g.log(M);
    const int t1 = g.sum_all(g.hadamard(P, g.sub(g.log(P), log_m)));
    const int t2 = g.sum_all(g.hadamard(Q, g.sub(g.log(Q), log_m)));
    return g.scale(g.add(t1, t2), 0.5);
}

double adversarial_loss(int rows, int cols, const PerturbedBuilder& build,
                        const std::vector<nn::Mat>& clean_logits, const AdvConfig& cfg,
                        std::mt19937_64& rng, nn::Mat* out_eps) {
    if (cfg.radius < 0.0) throw UsageError("adversarial radius must be >= 0");
    if (cfg.radius == 0.0) {
        if (out_eps) *out_eps = nn::Mat(rows, cols);
        return 0.0;
    }
    const double step = cfg.step_size < 0.0 ? cfg.radius : cfg.step_size;

    // Summed divergence and its gradient with respect to eps.
    auto evaluate = [&](const nn::Mat& eps, nn::Mat* grad) {
        nn::Graph g;
        const int en = grad ? g.leaf(eps) : g.constant(eps);
        const std::vector<int> heads = build(g, en);
        if (heads.size() != clean_logits.size())
            throw RuntimeFailure("adversarial_loss: head count mismatch");
        int total = -1;
        for (size_t i = 0; i < heads.size(); ++i) {
            const int js = js_divergence_node(g, g.constant(clean_logits[i]), heads[i]);
            total = total < 0 ? js : g.add(total, js);
        }
        const double v = g.val(total).at(0, 0);
        if (grad) {
            g.backward(total);
            *grad = g.grad(en);
            if (grad->empty()) *grad = nn::Mat(rows, cols);
        }
        return v;
    };

    nn::Mat eps(rows, cols);
    nn::fill_gaussian(eps, 0.0, 1.0, rng);
    const double n0 = nn::l2_norm(eps);
    if (n0 > 0.0)
        for (double& v : eps.a) v *= (cfg.radius / 10.0) / n0;

    nn::Mat grad;
    double best = evaluate(eps, &grad);
    for (int s = 0; s < cfg.steps; ++s) {
        const double gn = nn::l2_norm(grad);
        if (gn < 1e-18) break;
        nn::Mat prop = eps;
        for (size_t i = 0; i < prop.a.size(); ++i) prop.a[i] += step * grad.a[i] / gn;
        const double pn = nn::l2_norm(prop);
        if (pn > cfg.radius)
            for (double& v : prop.a) v *= cfg.radius / pn;
        nn::Mat pgrad;
        const double pv = evaluate(prop, &pgrad);
        if (pv < best) break;  // accept-if-improved; gradient is deterministic
        eps = std::move(prop);
        grad = std::move(pgrad);
        best = pv;
    }
    if (out_eps) *out_eps = eps;
    return best;
}

LossBreakdown joint_loss(const LossBreakdown& parts, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw UsageError("alpha and beta must be >= 0");
    LossBreakdown out = parts;
    out.l_next = out.l_psg + out.l_begin + out.l_end;
    out.l_hist = out.l_hist_psg + out.l_hist_begin + out.l_hist_end;
    out.total = out.l_next + alpha * out.l_hist + beta * out.l_adv;
    return out;
}

}  // namespace knowid::obj
