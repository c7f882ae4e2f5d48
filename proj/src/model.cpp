#include "knowid/model.hpp"

#include <cstring>
#include <fstream>
#include <numeric>

#include "knowid/errors.hpp"

using nlohmann::json;

namespace knowid::model {

namespace {

constexpr char kMagic[8] = {'K', 'N', 'O', 'W', 'I', 'D', '0', '1'};

}  // namespace

std::optional<PreparedExample> prepare_example(const corpus::DialogueExample& ex,
                                               const enc::Tokenizer& tok,
                                               const enc::Limits& limits, bool training,
                                               corpus::SkipReport* skip) {
    PreparedExample out;
    out.example_id = ex.example_id;
    out.src = ex;

    for (const corpus::Passage& p : ex.candidates)
        out.inputs.push_back(enc::assemble_input(ex.context, p.title, p, tok, limits));

    for (size_t k = 0; k < ex.candidates.size(); ++k)
        if (ex.candidates[k].passage_id == ex.gold.passage_id)
            out.gold_passage = static_cast<int>(k);

    if (out.gold_passage >= 0) {
        const enc::EncodedInput& gin = out.inputs[static_cast<size_t>(out.gold_passage)];
        if (ex.gold.end_su >= gin.retained_su_count) {
            if (training) {
                if (skip) skip->drop("gold_span_truncated");
                return std::nullopt;
            }
            // Inference keeps the example; the gold indices stay as metadata.
        }
        out.gold_begin = ex.gold.begin_su;
        out.gold_end = ex.gold.end_su;
    } else if (training) {
        if (skip) skip->drop("gold_passage_not_in_candidates");
        return std::nullopt;
    }

    // Retained context turns are identical across candidates (the dialogue
    // side of the layout does not depend on the passage).
    const int retained_turns = static_cast<int>(out.inputs.front().turn_markers.size());

    for (const auto& [turn_idx, label] : ex.history_labels) {
        if (turn_idx > retained_turns) {
            if (skip) skip->drop("history_turn_truncated");
            continue;
        }
        int passage = -1;
        for (size_t k = 0; k < ex.candidates.size(); ++k)
            if (ex.candidates[k].passage_id == label.passage_id) passage = static_cast<int>(k);
        if (passage < 0) continue;  // not resolvable in this candidate set
        if (label.end_su >= out.inputs[static_cast<size_t>(passage)].retained_su_count) {
            if (skip) skip->drop("history_span_truncated");
            continue;
        }
        PreparedExample::Hist h;
        h.turn = turn_idx;
        h.role = ex.context[static_cast<size_t>(turn_idx - 1)].role;
        h.passage = passage;
        h.begin_su = label.begin_su;
        h.end_su = label.end_su;
        out.history.push_back(h);
    }
    return out;
}

KnowledgeModel::KnowledgeModel(const ModelConfig& cfg, int vocab_size)
    : cfg_(cfg), vocab_size_(vocab_size) {
    encoder_.emplace(cfg.encoder, vocab_size, params_);
    std::mt19937_64 rng(cfg.encoder.seed + 0x9e3779b97f4a7c15ull);
    ctx::register_params(params_, cfg.encoder.d, rng);
    obj::register_next_heads(params_, cfg.encoder.d, rng);
    obj::register_history_heads(params_, cfg.encoder.d, rng);
}

KnowledgeModel::KnowledgeModel(const ModelConfig& cfg, int vocab_size, nn::ParamStore params)
    : cfg_(cfg), vocab_size_(vocab_size), params_(std::move(params)) {
    encoder_.emplace(enc::TinyEncoder::attach(cfg.encoder, vocab_size, params_));
    const int d = cfg.encoder.d;
    for (const char* name : {"ctx.user.Ws", "hist.W", "hist.Wb", "hist.We"}) {
        const nn::Mat& m = params_.get(name);
        if (m.rows != d || m.cols != d)
            throw DataError(std::string("checkpoint parameter ") + name + " is " +
                            std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                            ", expected " + std::to_string(d) + "x" + std::to_string(d));
    }
    if (params_.get("next.wb").rows != 3 * d)
        throw DataError("checkpoint span head expects 3d = " + std::to_string(3 * d) +
                        ", found " + std::to_string(params_.get("next.wb").rows));
}

int KnowledgeModel::max_input_rows(const PreparedExample& ex) {
    size_t rows = 0;
    for (const enc::EncodedInput& in : ex.inputs) rows = std::max(rows, in.token_ids.size());
    return static_cast<int>(rows);
}

KnowledgeModel::Forward KnowledgeModel::forward(nn::Graph& g, nn::ParamBinding& bind,
                                                const PreparedExample& ex, int eps_node) const {
    Forward fwd;
    for (const enc::TurnMarker& m : ex.inputs.front().turn_markers) fwd.roles.push_back(m.role);

    std::vector<int> sdot_nodes;
    for (const enc::EncodedInput& in : ex.inputs) {
        int emb = encoder_->embed(g, bind, in.token_ids);
        if (eps_node >= 0) {
            const int T = static_cast<int>(in.token_ids.size());
            std::vector<int> rows(static_cast<size_t>(T));
            std::iota(rows.begin(), rows.end(), 0);
            emb = g.add(emb, g.gather_rows(eps_node, std::move(rows)));
        }
        const int hidden = encoder_->encode_from_embeddings(g, bind, emb, in.attention_mask);
        const enc::PooledNodes pooled = enc::gather_nodes(g, hidden, in);

        const ctx::Contextualized c =
            ctx::contextualize(g, bind, pooled.S, pooled.z, pooled.U, fwd.roles, cfg_.context);
        fwd.z.push_back(pooled.z);
        fwd.U.push_back(pooled.U);
        fwd.S.push_back(pooled.S);
        fwd.sdot.push_back(c.s_dot);
        sdot_nodes.push_back(c.s_dot);
    }
    fwd.logits = obj::next_turn_logits(g, bind, fwd.z, sdot_nodes);
    return fwd;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write checkpoint: " + path);

    json header;
    header["config"] = ckpt.config;
    header["vocab"] = ckpt.vocab_tokens;
    header["dev_metrics"] = ckpt.dev_metrics;
    header["tensors"] = json::array();
    for (const auto& e : ckpt.params.entries())
        header["tensors"].push_back(json{{"name", e.name},
                                         {"rows", e.value.rows},
                                         {"cols", e.value.cols},
                                         {"decay", e.decay}});
    const std::string hs = header.dump();
    const uint64_t hlen = hs.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& e : ckpt.params.entries())
        out.write(reinterpret_cast<const char*>(e.value.a.data()),
                  static_cast<std::streamsize>(e.value.a.size() * sizeof(double)));
    if (!out) throw RuntimeFailure("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint schema mismatch: expected container version KNOWID01");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("truncated checkpoint header: " + path);
    const json header = json::parse(hs);

    Checkpoint ckpt;
    ckpt.config = header.at("config");
    ckpt.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    ckpt.dev_metrics = header.value("dev_metrics", json::object());
    for (const json& t : header.at("tensors")) {
        nn::Mat m(t.at("rows").get<int>(), t.at("cols").get<int>());
        in.read(reinterpret_cast<char*>(m.a.data()),
                static_cast<std::streamsize>(m.a.size() * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint tensor data: " + path);
        ckpt.params.add(t.at("name").get<std::string>(), std::move(m), t.value("decay", true));
    }
    return ckpt;
}

json model_config_to_json(const ModelConfig& cfg) {
    return json{{"encoder",
                 json{{"layers", cfg.encoder.layers},
                      {"d", cfg.encoder.d},
                      {"heads", cfg.encoder.heads},
                      {"max_len", cfg.encoder.max_len},
                      {"seed", cfg.encoder.seed}}},
                {"c_user", cfg.context.c_user},
                {"c_agent", cfg.context.c_agent}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    const json& e = j.at("encoder");
    cfg.encoder.layers = e.at("layers").get<int>();
    cfg.encoder.d = e.at("d").get<int>();
    cfg.encoder.heads = e.at("heads").get<int>();
    cfg.encoder.max_len = e.at("max_len").get<int>();
    cfg.encoder.seed = e.at("seed").get<uint64_t>();
    cfg.context.c_user = j.value("c_user", 2);
    cfg.context.c_agent = j.value("c_agent", 2);
    return cfg;
}

}  // namespace knowid::model
