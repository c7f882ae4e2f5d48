#include "knowid/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "knowid/errors.hpp"

using nlohmann::json;

namespace knowid::metrics {

namespace {

std::vector<std::string> ws_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

namespace {

// Lowercase, strip punctuation, collapse whitespace. Article removal is
// applied on top of this for exact match only: the token-level F1 counts
// every token, articles included (overlap("a b c", "b c d") = 2 of 3).
std::vector<std::string> light_tokens(std::string_view text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::ispunct(u)) continue;
        lowered.push_back(static_cast<char>(std::tolower(u)));
    }
    return ws_tokens(lowered);
}

}  // namespace

std::string normalize(std::string_view text) {
    std::string out;
    for (const std::string& tok : light_tokens(text)) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

int exact_match(std::string_view pred, std::string_view gold) {
    return normalize(pred) == normalize(gold) ? 1 : 0;
}

double token_f1(std::string_view pred, std::string_view gold) {
    const std::vector<std::string> p = light_tokens(pred);
    const std::vector<std::string> g = light_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, long> gold_counts;
    for (const std::string& t : g) ++gold_counts[t];
    long overlap = 0;
    for (const std::string& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate(std::span<const infer::Prediction> predictions,
                    std::span<const Reference> references) {
    std::unordered_map<std::string, const Reference*> by_id;
    for (const Reference& r : references) by_id[r.example_id] = &r;

    std::string missing;
    for (const auto& p : predictions)
        if (by_id.find(p.example_id) == by_id.end()) missing += " " + p.example_id;
    if (!missing.empty())
        throw DataError("predictions without references:" + missing);

    struct Acc {
        double em = 0, f1 = 0, pacc = 0;
        long n = 0;
    };
    Acc seen, unseen;
    for (const auto& p : predictions) {
        const Reference& r = *by_id.at(p.example_id);
        Acc& acc = r.split == "unseen" ? unseen : seen;
        acc.em += exact_match(p.text, r.text);
        acc.f1 += token_f1(p.text, r.text);
        acc.pacc += p.passage_id == r.passage_id ? 1.0 : 0.0;
        ++acc.n;
    }

    auto finish = [](const Acc& a) {
        SplitScores s;
        s.n = a.n;
        if (a.n > 0) {
            s.em = a.em / a.n;
            s.f1 = a.f1 / a.n;
            s.passage_acc = a.pacc / a.n;
        }
        return s;
    };
    EvalReport report;
    report.seen = finish(seen);
    report.unseen = finish(unseen);
    Acc all;
    all.em = seen.em + unseen.em;
    all.f1 = seen.f1 + unseen.f1;
    all.pacc = seen.pacc + unseen.pacc;
    all.n = seen.n + unseen.n;
    report.overall = finish(all);
    return report;
}

json EvalReport::to_json() const {
    auto split = [](const SplitScores& s) {
        return json{{"em", s.em}, {"f1", s.f1}, {"passage_acc", s.passage_acc}, {"n", s.n}};
    };
    return json{{"overall", split(overall)}, {"seen", split(seen)}, {"unseen", split(unseen)}};
}

void write_references(std::span<const Reference> refs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write references: " + path);
    for (const Reference& r : refs) {
        json j;
        j["example_id"] = r.example_id;
        j["passage_id"] = r.passage_id;
        j["begin_su"] = r.begin_su;
        j["end_su"] = r.end_su;
        j["text"] = r.text;
        j["split"] = r.split;
        j["doc_id"] = r.doc_id;
        out << j.dump() << "\n";
    }
}

std::vector<Reference> read_references(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open references: " + path);
    std::vector<Reference> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Reference r;
        r.example_id = j.at("example_id").get<std::string>();
        r.passage_id = j.at("passage_id").get<std::string>();
        r.begin_su = j.value("begin_su", 0);
        r.end_su = j.value("end_su", 0);
        r.text = j.at("text").get<std::string>();
        r.split = j.value("split", "seen");
        r.doc_id = j.value("doc_id", "");
        out.push_back(std::move(r));
    }
    return out;
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write report: " + path);
    out << report.to_json().dump(2) << "\n";
}

}  // namespace knowid::metrics
