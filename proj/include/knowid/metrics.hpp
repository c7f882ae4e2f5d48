#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "knowid/inference.hpp"

namespace knowid::metrics {

// Reading-comprehension-standard normalization: lowercase, strip punctuation,
// drop the articles a/an/the, collapse whitespace.
std::string normalize(std::string_view text);

int exact_match(std::string_view pred, std::string_view gold);

// Bag-of-tokens F1 with multiplicity over lowercased, punctuation-stripped
// whitespace tokens; articles count as tokens here, unlike exact_match.
// Both empty -> 1; exactly one empty -> 0.
double token_f1(std::string_view pred, std::string_view gold);

struct Reference {
    std::string example_id;
    std::string passage_id;
    int begin_su = 0;
    int end_su = 0;
    std::string text;
    std::string split = "seen";  // "seen" or "unseen"
    std::string doc_id;
};

struct SplitScores {
    double em = 0.0;
    double f1 = 0.0;
    double passage_acc = 0.0;
    long n = 0;
};

struct EvalReport {
    SplitScores seen, unseen, overall;
    nlohmann::json to_json() const;
};

// Means of EM / token F1 / passage accuracy per split; every prediction must
// have a reference with the same example_id.
EvalReport evaluate(std::span<const infer::Prediction> predictions,
                    std::span<const Reference> references);

void write_references(std::span<const Reference> refs, const std::string& path);
std::vector<Reference> read_references(const std::string& path);
void write_report(const EvalReport& report, const std::string& path);

}  // namespace knowid::metrics
