#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "knowid/contextualizer.hpp"
#include "knowid/corpus.hpp"
#include "knowid/encoding.hpp"
#include "knowid/objectives.hpp"

namespace knowid::model {

struct ModelConfig {
    enc::EncoderConfig encoder;
    ctx::Config context;
};

// A dialogue example with its per-candidate encoder inputs assembled and all
// gold/history indices checked against what truncation retained.
struct PreparedExample {
    std::string example_id;
    corpus::DialogueExample src;
    std::vector<enc::EncodedInput> inputs;  // aligned with src.candidates
    int gold_passage = -1;                  // -1: gold absent (inference only)
    int gold_begin = -1;
    int gold_end = -1;

    struct Hist {
        int turn = 0;  // 1-based context index
        corpus::Role role = corpus::Role::user;
        int passage = 0;
        int begin_su = 0;
        int end_su = 0;
    };
    std::vector<Hist> history;
};

// Returns nullopt (and counts the reason) when a training example's gold span
// was truncated away; inference examples are never dropped.
std::optional<PreparedExample> prepare_example(const corpus::DialogueExample& ex,
                                               const enc::Tokenizer& tok,
                                               const enc::Limits& limits, bool training,
                                               corpus::SkipReport* skip);

class KnowledgeModel {
public:
    // Fresh parameters, seeded by the encoder config seed.
    KnowledgeModel(const ModelConfig& cfg, int vocab_size);
    // Attach to checkpointed parameters.
    KnowledgeModel(const ModelConfig& cfg, int vocab_size, nn::ParamStore params);

    struct Forward {
        std::vector<int> z;     // per passage, 1 x d
        std::vector<int> U;     // per passage, turns x d (-1 when no turns)
        std::vector<int> S;     // per passage, raw spans l x d
        std::vector<int> sdot;  // per passage, l x 3d
        std::vector<corpus::Role> roles;  // retained turns, most recent first
        obj::NextTurnLogits logits;
    };

    // Full forward pass over all candidate passages. eps_node >= 0 adds the
    // perturbation rows (shared across passages) to every embedding sequence.
    Forward forward(nn::Graph& g, nn::ParamBinding& bind, const PreparedExample& ex,
                    int eps_node = -1) const;

    // Longest input across candidates; the adversarial perturbation tensor
    // spans this many rows.
    static int max_input_rows(const PreparedExample& ex);

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    int vocab_size() const { return vocab_size_; }

private:
    ModelConfig cfg_;
    int vocab_size_ = 0;
    nn::ParamStore params_;
    std::optional<enc::TinyEncoder> encoder_;
};

// ---------------------------------------------------------------------------
// Checkpoints: binary tensor container with a JSON header.

struct Checkpoint {
    nlohmann::json config;  // training config snapshot
    std::vector<std::string> vocab_tokens;
    nlohmann::json dev_metrics;
    nn::ParamStore params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace knowid::model
