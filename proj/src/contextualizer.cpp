#include "knowid/contextualizer.hpp"

#include <cmath>

namespace knowid::ctx {

void register_params(nn::ParamStore& store, int d, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (const char* branch : {"user", "agent"})
        for (const char* w : {"Ws", "Wz", "Wu"}) {
            nn::Mat m(d, d);
            nn::fill_uniform(m, -bound, bound, rng);
            store.add(std::string("ctx.") + branch + "." + w, std::move(m));
        }
}

double gate(std::span<const double> u, std::span<const double> z, std::span<const double> s) {
    double x = 0.0;
    for (size_t i = 0; i < u.size(); ++i) x += u[i] * (z[i] + s[i]);
    return 1.0 / (1.0 + std::exp(-x));
}

int contextualize_branch(nn::Graph& g, int S, int z, std::span<const int> turn_rows, int Ws,
                         int Wz, int Wu) {
    int acc = S;  // residual s_j
    const int sw = turn_rows.empty() ? -1 : g.matmul(S, Ws);
    const int zw = turn_rows.empty() ? -1 : g.matmul(z, Wz);
    for (int u : turn_rows) {
        const int shift = g.add(zw, g.matmul(u, Wu));        // 1 x d
        const int a = g.add_rowvec(sw, shift);               // l x d
        const int uz = g.matmul(u, g.transpose(z));          // 1 x 1
        const int us = g.matmul(S, g.transpose(u));          // l x 1
        const int gates = g.sigmoid(g.add_scalar(us, uz));   // l x 1
        acc = g.add(acc, g.mul_colvec(g.relu(a), gates));
    }
    return g.l2_normalize_rows(acc);
}

Contextualized contextualize(nn::Graph& g, nn::ParamBinding& bind, int S, int z, int U,
                             std::span<const corpus::Role> roles, const Config& cfg) {
    auto branch_rows = [&](corpus::Role role, int want) {
        std::vector<int> rows;
        if (U < 0 || want <= 0) return rows;
        for (size_t i = 0; i < roles.size() && static_cast<int>(rows.size()) < want; ++i)
            if (roles[i] == role) rows.push_back(g.gather_rows(U, {static_cast<int>(i)}));
        return rows;
    };

    const std::vector<int> user_rows = branch_rows(corpus::Role::user, cfg.c_user);
    const std::vector<int> agent_rows = branch_rows(corpus::Role::agent, cfg.c_agent);

    Contextualized out;
    const int user = contextualize_branch(g, S, z, user_rows, bind("ctx.user.Ws"),
                                          bind("ctx.user.Wz"), bind("ctx.user.Wu"));
    const int agent = contextualize_branch(g, S, z, agent_rows, bind("ctx.agent.Ws"),
                                           bind("ctx.agent.Wz"), bind("ctx.agent.Wu"));
    std::vector<int> parts{S, user, agent};
    out.s_dot = g.concat_cols(parts);

    // Gate values for inspection (recomputed at value level).
    const nn::Mat& sv = g.val(S);
    const nn::Mat& zv = g.val(z);
    auto record_gates = [&](const std::vector<int>& rows) {
        for (int u : rows) {
            const nn::Mat& uv = g.val(u);
            for (int j = 0; j < sv.rows; ++j) {
                std::span<const double> srow(&sv.a[static_cast<size_t>(j) * sv.cols],
                                             static_cast<size_t>(sv.cols));
                out.gates.push_back(gate(uv.a, zv.a, srow));
            }
        }
    };
    record_gates(user_rows);
    record_gates(agent_rows);
    return out;
}

}  // namespace knowid::ctx
