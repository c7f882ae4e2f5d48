#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "knowid/graph.hpp"
#include "knowid/params.hpp"

namespace knowid::obj {

// Next-turn heads: "next.wp" (d x 1) over pooled passage vectors,
// "next.wb"/"next.we" (3d x 1) over contextualized span rows.
void register_next_heads(nn::ParamStore& store, int d, std::mt19937_64& rng);

// History heads: "hist.W" (d x d), "hist.wp" (d x 1) for passage prediction,
// "hist.Wb"/"hist.We" (d x d) for span prediction against raw span vectors.
void register_history_heads(nn::ParamStore& store, int d, std::mt19937_64& rng);

// Logit rows for one example. begin/end run over the retained SUs of all
// candidate passages concatenated in candidate order; su_offsets maps between
// the global axis and (passage, su) pairs.
struct NextTurnLogits {
    int psg = -1;    // 1 x K
    int begin = -1;  // 1 x L
    int end = -1;    // 1 x L
    std::vector<int> su_offsets;  // size K + 1, su_offsets[K] == L

    int global_index(int passage, int su) const {
        return su_offsets[static_cast<size_t>(passage)] + su;
    }
    std::pair<int, int> passage_su(int global) const;
};

// z_nodes: per-passage pooled vectors (1 x d); sdot_nodes: per-passage
// contextualized spans (l_k x 3d).
NextTurnLogits next_turn_logits(nn::Graph& g, nn::ParamBinding& bind,
                                std::span<const int> z_nodes, std::span<const int> sdot_nodes);

double cross_entropy(std::span<const double> logits, int gold);
int cross_entropy_node(nn::Graph& g, int logits_row, int gold);

struct NextLossNodes {
    int psg = -1;
    int begin = -1;
    int end = -1;
};

// Cross-entropies at the gold passage and the gold global begin/end indices.
NextLossNodes next_loss(nn::Graph& g, const NextTurnLogits& logits, int gold_passage,
                        int gold_begin_global, int gold_end_global);

// One history turn in U*: its pooled vector from every candidate passage's
// encoding plus its gold location. begin/end indices are within the gold
// passage's retained SUs.
struct HistoryTurnRef {
    std::vector<int> u_rows;  // per passage, 1 x d
    int gold_passage = 0;
    int begin_su = 0;
    int end_su = 0;
};

struct HistoryLossNodes {
    int psg = -1;  // -1 when U* is empty (loss contribution 0)
    int begin = -1;
    int end = -1;
};

// s_nodes: per-passage raw span matrices (l_k x d). Losses are averaged over
// the turns in U*.
HistoryLossNodes history_loss(nn::Graph& g, nn::ParamBinding& bind,
                              std::span<const HistoryTurnRef> turns,
                              std::span<const int> s_nodes);

// Jensen-Shannon divergence between softmax(p) and softmax(q), natural log.
// Bounded by ln 2.
double js_divergence(std::span<const double> logits_p, std::span<const double> logits_q);
int js_divergence_node(nn::Graph& g, int p_logits, int q_logits);

// ---------------------------------------------------------------------------
// Adversarial posterior regularization

struct AdvConfig {
    double radius = 0.0;     // L2 ball over the whole perturbation tensor
    int steps = 1;
    double step_size = -1.0;  // < 0 means "use radius"
};

// Builds, on the given graph, the per-head logit rows under perturbation eps.
using PerturbedBuilder = std::function<std::vector<int>(nn::Graph&, int eps)>;

// Inner maximization of sum_f JS(clean_f || perturbed_f) by projected
// gradient ascent with accept-if-improved; clean logits stay constant.
// Returns the divergence at the final perturbation; out_eps receives it.
double adversarial_loss(int rows, int cols, const PerturbedBuilder& build,
                        const std::vector<nn::Mat>& clean_logits, const AdvConfig& cfg,
                        std::mt19937_64& rng, nn::Mat* out_eps = nullptr);

// ---------------------------------------------------------------------------
// Joint objective

struct LossBreakdown {
    double l_psg = 0, l_begin = 0, l_end = 0, l_next = 0;
    double l_hist_psg = 0, l_hist_begin = 0, l_hist_end = 0, l_hist = 0;
    double l_adv = 0;
    double total = 0;
};

// total = l_next + alpha * l_hist + beta * l_adv, with the component sums
// recomputed from the parts. alpha, beta must be >= 0.
LossBreakdown joint_loss(const LossBreakdown& parts, double alpha, double beta);

}  // namespace knowid::obj
