#pragma once

#include <span>
#include <string>
#include <vector>

#include "knowid/model.hpp"

namespace knowid::infer {

struct SpanChoice {
    int begin = 0;
    int end = 0;
    double score = 0.0;
};

// Maximizes begin_probs[b] + end_probs[e] over b <= e <= b + max_len - 1.
// Ties break toward the smaller b, then the smaller e.
SpanChoice enumerate_best_span(std::span<const double> begin_probs,
                               std::span<const double> end_probs, int max_len);

struct Options {
    int max_knowledge_len = 5;
    // Score spans by summed log probabilities instead of summed
    // probabilities; off by default.
    bool log_prob_score = false;
};

struct Prediction {
    std::string example_id;
    std::string passage_id;
    int begin_su = 0;
    int end_su = 0;
    std::string text;
    double passage_prob = 0.0;
    double span_score = 0.0;
};

// Argmax passage, then best span within it with begin/end probabilities
// renormalized over the selected passage.
Prediction predict(const model::KnowledgeModel& m, const model::PreparedExample& ex,
                   const Options& opts);

void batch_predict(const model::KnowledgeModel& m,
                   std::span<const model::PreparedExample> examples, const Options& opts,
                   const std::string& out_path);

void write_predictions(std::span<const Prediction> preds, const std::string& path);
std::vector<Prediction> read_predictions(const std::string& path);

}  // namespace knowid::infer
