#include "knowid/encoding.hpp"

#include <cmath>
#include <numeric>

#include "knowid/errors.hpp"

namespace knowid::enc {

namespace {

constexpr double kMaskPenalty = -1e9;

std::string layer_prefix(int layer) { return "enc.layer" + std::to_string(layer) + "."; }

}  // namespace

EncodedInput assemble_input(std::span<const corpus::Turn> context, const std::string& title,
                            const corpus::Passage& passage, const Tokenizer& tok,
                            const Limits& limits) {
    if (context.empty()) throw RuntimeFailure("assemble_input: empty dialogue context");
    if (context.front().role != corpus::Role::user)
        throw RuntimeFailure("assemble_input: most recent context turn must be a user turn");
    if (limits.max_context_tokens < 1 || limits.max_total_tokens < 5)
        throw UsageError("assemble_input: limits too small for [cls], a turn marker and an SU");

    // Dialogue side: keep whole turns, most recent first, while they fit;
    // the oldest retained turn may lose trailing tokens to fill the budget.
    struct RetainedTurn {
        int context_index;  // 1-based
        corpus::Role role;
        std::vector<int> ids;
    };
    std::vector<RetainedTurn> retained;
    int context_len = 0;
    for (size_t i = 0; i < context.size(); ++i) {
        std::vector<int> ids = tok.tokenize(context[i].text);
        const int cost = 1 + static_cast<int>(ids.size());
        const int room = limits.max_context_tokens - context_len;
        if (cost <= room) {
            retained.push_back({static_cast<int>(i) + 1, context[i].role, std::move(ids)});
            context_len += cost;
            continue;
        }
        if (room >= 1 && (i == 0 || room >= 2)) {
            ids.resize(static_cast<size_t>(std::max(0, room - 1)));
            context_len += 1 + static_cast<int>(ids.size());
            retained.push_back({static_cast<int>(i) + 1, context[i].role, std::move(ids)});
        }
        break;  // older turns are dropped entirely
    }
    if (retained.empty()) throw UsageError("assemble_input: context budget cannot hold one turn");

    const std::vector<int> title_ids = tok.tokenize(title);

    EncodedInput out;
    out.token_ids.push_back(kCls);
    out.global_cls_pos = 0;
    for (const RetainedTurn& t : retained) {
        out.turn_markers.push_back(
            {static_cast<int>(out.token_ids.size()), t.role, t.context_index});
        out.token_ids.push_back(t.role == corpus::Role::user ? kUsr : kAgt);
        out.token_ids.insert(out.token_ids.end(), t.ids.begin(), t.ids.end());
    }
    out.token_ids.push_back(kSep);
    out.token_ids.insert(out.token_ids.end(), title_ids.begin(), title_ids.end());

    // Passage side: [cls] + SU tokens per unit, dropping trailing SUs that
    // do not fit; the last retained SU may lose trailing tokens.
    const int budget = limits.max_total_tokens - 1;  // reserve the final [sep]
    for (const corpus::SemanticUnit& su : passage.units) {
        std::vector<int> ids = tok.tokenize(su.text);
        const int room = budget - static_cast<int>(out.token_ids.size());
        const int cost = 1 + static_cast<int>(ids.size());
        if (cost <= room) {
            out.su_cls_pos.push_back(static_cast<int>(out.token_ids.size()));
            out.token_ids.push_back(kCls);
            out.token_ids.insert(out.token_ids.end(), ids.begin(), ids.end());
            ++out.retained_su_count;
            continue;
        }
        if (room >= 2) {  // partial SU: [cls] plus at least one token
            ids.resize(static_cast<size_t>(room - 1));
            out.su_cls_pos.push_back(static_cast<int>(out.token_ids.size()));
            out.token_ids.push_back(kCls);
            out.token_ids.insert(out.token_ids.end(), ids.begin(), ids.end());
            ++out.retained_su_count;
        }
        break;
    }
    if (out.retained_su_count == 0)
        throw UsageError("assemble_input: total budget cannot hold one semantic unit");
    out.token_ids.push_back(kSep);
    out.attention_mask.assign(out.token_ids.size(), 1);
    return out;
}

PooledReps gather(const nn::Mat& hidden, const EncodedInput& enc) {
    if (hidden.rows != static_cast<int>(enc.token_ids.size()))
        throw RuntimeFailure("gather: hidden rows do not match the encoded input length");
    PooledReps reps;
    const int d = hidden.cols;
    reps.z = nn::Mat(1, d);
    for (int c = 0; c < d; ++c) reps.z.at(0, c) = hidden.at(enc.global_cls_pos, c);
    reps.U = nn::Mat(static_cast<int>(enc.turn_markers.size()), d);
    for (size_t i = 0; i < enc.turn_markers.size(); ++i) {
        reps.roles.push_back(enc.turn_markers[i].role);
        for (int c = 0; c < d; ++c)
            reps.U.at(static_cast<int>(i), c) = hidden.at(enc.turn_markers[i].pos, c);
    }
    reps.S = nn::Mat(enc.retained_su_count, d);
    for (size_t i = 0; i < enc.su_cls_pos.size(); ++i)
        for (int c = 0; c < d; ++c)
            reps.S.at(static_cast<int>(i), c) = hidden.at(enc.su_cls_pos[i], c);
    return reps;
}

PooledNodes gather_nodes(nn::Graph& g, int hidden, const EncodedInput& enc) {
    PooledNodes out;
    out.z = g.gather_rows(hidden, {enc.global_cls_pos});
    std::vector<int> turn_pos;
    for (const TurnMarker& m : enc.turn_markers) turn_pos.push_back(m.pos);
    out.U = enc.turn_markers.empty() ? -1 : g.gather_rows(hidden, std::move(turn_pos));
    out.S = g.gather_rows(hidden, enc.su_cls_pos);
    return out;
}

// ---------------------------------------------------------------------------
// TinyEncoder

TinyEncoder::TinyEncoder(const EncoderConfig& cfg, int vocab_size, nn::ParamStore& store)
    : cfg_(cfg), vocab_size_(vocab_size) {
    if (cfg.d % cfg.heads != 0)
        throw UsageError("encoder heads must divide hidden dimension d");
    std::mt19937_64 rng(cfg.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    auto matrix = [&](const std::string& name, int r, int c, double b) {
        nn::Mat m(r, c);
        nn::fill_uniform(m, -b, b, rng);
        store.add(name, std::move(m));
    };
    auto ln = [&](const std::string& name) {
        nn::Mat g1(1, cfg.d);
        for (double& v : g1.a) v = 1.0;
        store.add(name + ".g", std::move(g1), /*decay=*/false);
        store.add(name + ".b", nn::Mat(1, cfg.d), /*decay=*/false);
    };

    matrix("enc.tok_emb", vocab_size, cfg.d, bound);
    matrix("enc.pos_emb", cfg.max_len, cfg.d, bound);
    ln("enc.emb_ln");
    const int hid = 4 * cfg.d;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = layer_prefix(l);
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            matrix(p + w, cfg.d, cfg.d, bound);
            store.add(p + w + ".b", nn::Mat(1, cfg.d), /*decay=*/false);
        }
        ln(p + "ln1");
        matrix(p + "mlp.w1", cfg.d, hid, bound);
        store.add(p + "mlp.w1.b", nn::Mat(1, hid), /*decay=*/false);
        matrix(p + "mlp.w2", hid, cfg.d, 1.0 / std::sqrt(static_cast<double>(hid)));
        store.add(p + "mlp.w2.b", nn::Mat(1, cfg.d), /*decay=*/false);
        ln(p + "ln2");
    }
}

TinyEncoder TinyEncoder::attach(const EncoderConfig& cfg, int vocab_size,
                                const nn::ParamStore& store) {
    TinyEncoder e(cfg, vocab_size);
    const nn::Mat& emb = store.get("enc.tok_emb");
    if (emb.rows != vocab_size || emb.cols != cfg.d)
        throw DataError("checkpoint embedding is " + std::to_string(emb.rows) + "x" +
                        std::to_string(emb.cols) + ", expected " + std::to_string(vocab_size) +
                        "x" + std::to_string(cfg.d));
    return e;
}

int TinyEncoder::embed(nn::Graph& g, nn::ParamBinding& bind,
                       std::span<const int> token_ids) const {
    const int T = static_cast<int>(token_ids.size());
    if (T > cfg_.max_len)
        throw RuntimeFailure("sequence length " + std::to_string(T) +
                             " exceeds encoder max_len " + std::to_string(cfg_.max_len));
    std::vector<int> tok_idx(token_ids.begin(), token_ids.end());
    std::vector<int> pos_idx(static_cast<size_t>(T));
    std::iota(pos_idx.begin(), pos_idx.end(), 0);
    return g.add(g.gather_rows(bind("enc.tok_emb"), std::move(tok_idx)),
                 g.gather_rows(bind("enc.pos_emb"), std::move(pos_idx)));
}

int TinyEncoder::encode_from_embeddings(nn::Graph& g, nn::ParamBinding& bind, int emb,
                                        std::span<const uint8_t> mask) const {
    const int T = g.val(emb).rows;
    const int dh = cfg_.d / cfg_.heads;

    bool any_pad = false;
    for (uint8_t m : mask) any_pad = any_pad || (m == 0);
    int mask_node = -1;
    if (any_pad) {
        nn::Mat m(T, T);
        for (int r = 0; r < T; ++r)
            for (int c = 0; c < T; ++c)
                if (mask[static_cast<size_t>(c)] == 0) m.at(r, c) = kMaskPenalty;
        mask_node = g.constant(std::move(m));
    }

    auto linear = [&](int x, const std::string& w) {
        return g.add_rowvec(g.matmul(x, bind(w)), bind(w + ".b"));
    };

    int h = g.layer_norm_rows(emb, bind("enc.emb_ln.g"), bind("enc.emb_ln.b"), 1e-5);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = layer_prefix(l);
        const int q = linear(h, p + "wq");
        const int k = linear(h, p + "wk");
        const int v = linear(h, p + "wv");
        std::vector<int> head_out;
        for (int hd = 0; hd < cfg_.heads; ++hd) {
            const int c0 = hd * dh;
            const int qh = g.slice_cols(q, c0, c0 + dh);
            const int kh = g.slice_cols(k, c0, c0 + dh);
            const int vh = g.slice_cols(v, c0, c0 + dh);
            int scores = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(double(dh)));
            if (mask_node >= 0) scores = g.add(scores, mask_node);
            head_out.push_back(g.matmul(g.softmax_rows(scores), vh));
        }
        const int attn = linear(g.concat_cols(head_out), p + "wo");
        h = g.layer_norm_rows(g.add(h, attn), bind(p + "ln1.g"), bind(p + "ln1.b"), 1e-5);
        const int ff = linear(g.gelu(linear(h, p + "mlp.w1")), p + "mlp.w2");
        h = g.layer_norm_rows(g.add(h, ff), bind(p + "ln2.g"), bind(p + "ln2.b"), 1e-5);
    }
    return h;
}

std::vector<PooledReps> encode_batch(const Encoder& encoder, const nn::ParamStore& params,
                                     std::span<const EncodedInput> inputs) {
    size_t max_len = 0;
    for (const EncodedInput& in : inputs) max_len = std::max(max_len, in.token_ids.size());

    std::vector<PooledReps> out;
    for (const EncodedInput& in : inputs) {
        EncodedInput padded = in;
        padded.token_ids.resize(max_len, kPad);
        padded.attention_mask.resize(max_len, 0);
        nn::Graph g;
        nn::ParamBinding bind(g, params, /*trainable=*/false);
        const int hidden = encoder.encode(g, bind, padded.token_ids, padded.attention_mask);
        out.push_back(gather(g.val(hidden), padded));
    }
    return out;
}

}  // namespace knowid::enc
