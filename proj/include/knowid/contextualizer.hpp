#pragma once

#include <span>
#include <string>
#include <vector>

#include "knowid/corpus.hpp"
#include "knowid/graph.hpp"
#include "knowid/params.hpp"

namespace knowid::ctx {

// Dialogue-contextualized span embeddings. Each branch applies, per span row
// s_j and per selected turn u_i,
//   a_ij = W_s s_j + W_z z + W_u u_i
//   g_ij = sigmoid(u_i . z + u_i . s_j)
//   out_j = l2_normalize( sum_i relu(a_ij) * g_ij + s_j )
// and the full output concatenates [s, user branch, agent branch] to 3d.
// Matrices are stored input x output, so rows transform as v -> v W.

struct Config {
    int c_user = 2;   // most recent user turns feeding the user branch
    int c_agent = 2;  // most recent agent turns feeding the agent branch
};

// Registers the six branch matrices ("ctx.user.*", "ctx.agent.*"),
// initialized uniform in [-1/sqrt(d), 1/sqrt(d)].
void register_params(nn::ParamStore& store, int d, std::mt19937_64& rng);

// Scalar gate value sigmoid(u.z + u.s); exposed for tests and inspection.
double gate(std::span<const double> u, std::span<const double> z, std::span<const double> s);

// One branch over the given turn rows (each 1 x d). turns may be empty, in
// which case rows reduce to s_j / ||s_j||.
int contextualize_branch(nn::Graph& g, int S, int z, std::span<const int> turn_rows, int Ws,
                         int Wz, int Wu);

struct Contextualized {
    int s_dot = -1;               // l x 3d
    std::vector<double> gates;    // gate values, row-major (turn-major), inspection only
};

// U carries one row per retained turn, most recent first, with role tags.
// Turns of the wrong role never enter a branch even if fewer than the
// configured count exist.
Contextualized contextualize(nn::Graph& g, nn::ParamBinding& bind, int S, int z, int U,
                             std::span<const corpus::Role> roles, const Config& cfg);

}  // namespace knowid::ctx
