#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "knowid/corpus.hpp"
#include "knowid/graph.hpp"
#include "knowid/params.hpp"
#include "knowid/tokenizer.hpp"

namespace knowid::enc {

struct Limits {
    int max_context_tokens = 128;
    int max_total_tokens = 512;
};

struct TurnMarker {
    int pos = 0;            // position of the [usr]/[agt] token
    corpus::Role role = corpus::Role::user;
    int context_index = 0;  // 1-based, 1 = most recent turn
};

// One (dialogue context, passage) pair laid out as
//   [cls] [usr] u1 [agt] u2 ... [sep] title [cls] su1 [cls] su2 ... [sep]
// The dialogue side is truncated to max_context_tokens by dropping oldest
// turns first, then trailing tokens of the oldest retained turn; the passage
// side drops trailing SUs to fit max_total_tokens.
struct EncodedInput {
    std::vector<int> token_ids;
    std::vector<uint8_t> attention_mask;  // 1 = real token, 0 = padding
    int global_cls_pos = 0;
    std::vector<TurnMarker> turn_markers;  // most recent turn first
    std::vector<int> su_cls_pos;           // SU order; prefix of the passage
    int retained_su_count = 0;
};

EncodedInput assemble_input(std::span<const corpus::Turn> context, const std::string& title,
                            const corpus::Passage& passage, const Tokenizer& tok,
                            const Limits& limits);

// Pooled vectors pulled out of the encoder output at the marker positions.
struct PooledReps {
    nn::Mat z;                        // 1 x d
    nn::Mat U;                        // retained turns x d, most recent first
    nn::Mat S;                        // retained SUs x d
    std::vector<corpus::Role> roles;  // aligned with U rows
};

PooledReps gather(const nn::Mat& hidden, const EncodedInput& enc);

// Graph-side variant used by the model forward pass.
struct PooledNodes {
    int z = -1;
    int U = -1;
    int S = -1;
};
PooledNodes gather_nodes(nn::Graph& g, int hidden, const EncodedInput& enc);

// ---------------------------------------------------------------------------
// Encoder

struct EncoderConfig {
    int layers = 2;
    int d = 32;
    int heads = 4;
    int max_len = 256;
    uint64_t seed = 1;
};

// Sequence encoder contract. embed and encode_from_embeddings are separate
// because the adversarial objective perturbs the post-embedding input.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual int dim() const = 0;
    virtual int max_len() const = 0;
    virtual int embed(nn::Graph& g, nn::ParamBinding& bind,
                      std::span<const int> token_ids) const = 0;
    virtual int encode_from_embeddings(nn::Graph& g, nn::ParamBinding& bind, int emb,
                                       std::span<const uint8_t> mask) const = 0;

    int encode(nn::Graph& g, nn::ParamBinding& bind, std::span<const int> token_ids,
               std::span<const uint8_t> mask) const {
        return encode_from_embeddings(g, bind, embed(g, bind, token_ids), mask);
    }
};

// Randomly initialized bidirectional self-attention encoder (post-layernorm,
// learned positions, GELU feed-forward). Deterministic for a fixed seed.
class TinyEncoder : public Encoder {
public:
    // Registers its parameters (prefix "enc.") in the store.
    TinyEncoder(const EncoderConfig& cfg, int vocab_size, nn::ParamStore& store);
    // Attaches to parameters already present in the store (checkpoint load).
    static TinyEncoder attach(const EncoderConfig& cfg, int vocab_size,
                              const nn::ParamStore& store);

    int dim() const override { return cfg_.d; }
    int max_len() const override { return cfg_.max_len; }
    int vocab_size() const { return vocab_size_; }
    const EncoderConfig& config() const { return cfg_; }

    int embed(nn::Graph& g, nn::ParamBinding& bind,
              std::span<const int> token_ids) const override;
    int encode_from_embeddings(nn::Graph& g, nn::ParamBinding& bind, int emb,
                               std::span<const uint8_t> mask) const override;

private:
    TinyEncoder(const EncoderConfig& cfg, int vocab_size) : cfg_(cfg), vocab_size_(vocab_size) {}
    EncoderConfig cfg_;
    int vocab_size_ = 0;
};

// Pads inputs to a common length and encodes each one; per-input results
// equal unbatched encoding (the encoder masks padding out of attention).
std::vector<PooledReps> encode_batch(const Encoder& encoder, const nn::ParamStore& params,
                                     std::span<const EncodedInput> inputs);

}  // namespace knowid::enc
