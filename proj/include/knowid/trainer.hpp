#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "knowid/corpus.hpp"
#include "knowid/model.hpp"
#include "knowid/objectives.hpp"
#include "knowid/tokenizer.hpp"

namespace knowid::train {

// Which history knowledge labels feed the auxiliary loss.
enum class HistoryMode { all, agent_only, agent_half, none };

HistoryMode history_mode_from_name(const std::string& s);
const char* history_mode_name(HistoryMode m);

struct TrainConfig {
    // data
    std::string train_dir;
    std::string dev_dir;  // empty: evaluate on the training set
    corpus::CorpusFormat format = corpus::CorpusFormat::doc2dial_like;
    corpus::SegmentStrategy strategy = corpus::SegmentStrategy::sections;

    model::ModelConfig model;
    enc::Limits limits;

    // optimization
    double learning_rate = 3e-5;
    long warmup_steps = 1000;
    int epochs = 20;
    int max_candidates_train = 20;
    int max_candidates_infer = 20;
    double alpha = 1.0;
    double beta = 5.0;
    obj::AdvConfig adversarial;  // radius 0 disables the perturbed pass
    int accum_steps = 8;
    double weight_decay = 0.01;
    uint64_t seed = 13;
    HistoryMode history_mode = HistoryMode::all;
    double early_stop_em = -1.0;  // stop once dev EM reaches this (< 0: off)
    int max_vocab = 30000;
    int max_knowledge_len = 5;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig load(const std::string& path);
};

struct TrainResult {
    double best_dev_em = 0.0;
    int best_epoch = -1;
    long steps = 0;
    std::string checkpoint_path;
    std::string log_path;
    std::string skip_report_path;
};

// Full training run: builds the vocabulary and examples from the corpus,
// optimizes the joint objective, evaluates dev EM per epoch, and writes the
// best-EM checkpoint plus JSONL telemetry into out_dir.
TrainResult train(const TrainConfig& cfg, const std::string& out_dir);

// Assembles encoder inputs for every example, dropping training examples
// whose gold span fell outside the truncation window.
std::vector<model::PreparedExample> prepare_examples(
    const std::vector<corpus::DialogueExample>& examples, const enc::Tokenizer& tok,
    const enc::Limits& limits, bool training, corpus::SkipReport* skip);

// Per-example joint loss on a fresh graph; runs backward when bind is
// trainable. Exposed for the gradient-check and equivariance tests.
obj::LossBreakdown example_loss(const model::KnowledgeModel& m, nn::Graph& g,
                                nn::ParamBinding& bind, const model::PreparedExample& ex,
                                double alpha, double beta, const obj::AdvConfig& adv,
                                std::mt19937_64& adv_rng, bool backward);

}  // namespace knowid::train
