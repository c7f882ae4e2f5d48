#include "knowid/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "knowid/errors.hpp"

using nlohmann::json;

namespace knowid::infer {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace

SpanChoice enumerate_best_span(std::span<const double> begin_probs,
                               std::span<const double> end_probs, int max_len) {
    if (begin_probs.empty() || begin_probs.size() != end_probs.size())
        throw RuntimeFailure("enumerate_best_span: empty or mismatched probability vectors");
    if (max_len < 1) throw UsageError("enumerate_best_span: max_len must be >= 1");
    const int l = static_cast<int>(begin_probs.size());
    SpanChoice best{0, 0, begin_probs[0] + end_probs[0]};
    for (int b = 0; b < l; ++b) {
        const int e_hi = std::min(l - 1, b + max_len - 1);
        for (int e = b; e <= e_hi; ++e) {
            const double score = begin_probs[static_cast<size_t>(b)] +
                                 end_probs[static_cast<size_t>(e)];
            if (score > best.score) best = {b, e, score};
        }
    }
    return best;
}

Prediction predict(const model::KnowledgeModel& m, const model::PreparedExample& ex,
                   const Options& opts) {
    if (ex.inputs.empty()) throw RuntimeFailure("predict: example has no candidate passages");
    nn::Graph g;
    nn::ParamBinding bind(g, m.params(), /*trainable=*/false);
    const auto fwd = m.forward(g, bind, ex);

    const std::vector<double> psg = softmax(g.val(fwd.logits.psg).a);
    int k = 0;
    for (size_t i = 1; i < psg.size(); ++i)
        if (psg[i] > psg[static_cast<size_t>(k)]) k = static_cast<int>(i);

    // Slice the global span distributions down to the chosen passage and
    // renormalize within it.
    const std::vector<double> begin_all = softmax(g.val(fwd.logits.begin).a);
    const std::vector<double> end_all = softmax(g.val(fwd.logits.end).a);
    const size_t lo = static_cast<size_t>(fwd.logits.su_offsets[static_cast<size_t>(k)]);
    const size_t hi = static_cast<size_t>(fwd.logits.su_offsets[static_cast<size_t>(k) + 1]);
    std::vector<double> begin(begin_all.begin() + lo, begin_all.begin() + hi);
    std::vector<double> end(end_all.begin() + lo, end_all.begin() + hi);
    auto renorm = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        if (s > 0.0)
            for (double& x : v) x /= s;
    };
    renorm(begin);
    renorm(end);

    SpanChoice span;
    if (opts.log_prob_score) {
        std::vector<double> lb(begin.size()), le(end.size());
        for (size_t i = 0; i < begin.size(); ++i) lb[i] = std::log(std::max(begin[i], 1e-300));
        for (size_t i = 0; i < end.size(); ++i) le[i] = std::log(std::max(end[i], 1e-300));
        span = enumerate_best_span(lb, le, opts.max_knowledge_len);
    } else {
        span = enumerate_best_span(begin, end, opts.max_knowledge_len);
    }

    const corpus::Passage& passage = ex.src.candidates[static_cast<size_t>(k)];
    Prediction pred;
    pred.example_id = ex.example_id;
    pred.passage_id = passage.passage_id;
    pred.begin_su = span.begin;
    pred.end_su = span.end;
    pred.text = passage.span_text(span.begin, span.end);
    pred.passage_prob = psg[static_cast<size_t>(k)];
    pred.span_score = span.score;
    return pred;
}

void batch_predict(const model::KnowledgeModel& m,
                   std::span<const model::PreparedExample> examples, const Options& opts,
                   const std::string& out_path) {
    std::vector<Prediction> preds;
    preds.reserve(examples.size());
    for (const model::PreparedExample& ex : examples) preds.push_back(predict(m, ex, opts));
    write_predictions(preds, out_path);
}

void write_predictions(std::span<const Prediction> preds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write predictions: " + path);
    size_t row = 0;
    for (const Prediction& p : preds) {
        json j;
        j["example_id"] = p.example_id;
        j["passage_id"] = p.passage_id;
        j["begin_su"] = p.begin_su;
        j["end_su"] = p.end_su;
        j["text"] = p.text;
        j["passage_prob"] = p.passage_prob;
        j["span_score"] = p.span_score;
        out << j.dump() << "\n";
        if (!out)
            throw RuntimeFailure("write failed at prediction " + std::to_string(row) + " of " +
                                 path);
        ++row;
    }
}

std::vector<Prediction> read_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open predictions: " + path);
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Prediction p;
        p.example_id = j.at("example_id").get<std::string>();
        p.passage_id = j.at("passage_id").get<std::string>();
        p.begin_su = j.at("begin_su").get<int>();
        p.end_su = j.at("end_su").get<int>();
        p.text = j.at("text").get<std::string>();
        p.passage_prob = j.value("passage_prob", 0.0);
        p.span_score = j.value("span_score", 0.0);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace knowid::infer
