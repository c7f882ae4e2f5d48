#include "knowid/synthetic.hpp"

#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "knowid/corpus.hpp"
#include "knowid/errors.hpp"

using nlohmann::json;

namespace knowid::corpus {

namespace {

const char* kFillers[] = {"works", "applies", "here", "only", "when", "ready",
                          "after", "review", "during", "intake", "by", "mail"};
const char* kAsk[] = {"tell me about", "what is", "please explain", "how does one handle"};

std::string cue_word(int d, int p, int s) {
    return "t" + std::to_string(d) + "p" + std::to_string(p) + "s" + std::to_string(s);
}

}  // namespace

void generate_synthetic(const SyntheticOptions& opts, const std::string& out_dir) {
    if (opts.dialogues < 1 || opts.docs < 1 || opts.passages_per_doc < 1 ||
        opts.sus_per_passage < 1)
        throw UsageError("gen-synthetic: all sizes must be >= 1");
    std::mt19937_64 rng(opts.seed);
    const int n_fill = static_cast<int>(std::size(kFillers));

    std::vector<RawDocument> docs;
    for (int d = 0; d < opts.docs; ++d) {
        RawDocument doc;
        doc.doc_id = "doc" + std::to_string(d);
        doc.title = "manual " + std::to_string(d);
        for (int p = 0; p < opts.passages_per_doc; ++p) {
            RawSection sec;
            sec.title = "part " + std::to_string(p);
            for (int s = 0; s < opts.sus_per_passage; ++s) {
                std::uniform_int_distribution<int> pick(0, n_fill - 1);
                const std::string f1 = kFillers[pick(rng)];
                const std::string f2 = kFillers[pick(rng)];
                sec.sus.push_back(cue_word(d, p, s) + " " + f1 + " " + f2);
            }
            doc.sections.push_back(std::move(sec));
        }
        docs.push_back(std::move(doc));
    }
    write_raw_documents(docs, out_dir + "/documents.jsonl");

    std::ofstream out(out_dir + "/dialogues.jsonl", std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + out_dir + "/dialogues.jsonl");
    const int spots = opts.passages_per_doc * opts.sus_per_passage;
    for (int i = 0; i < opts.dialogues; ++i) {
        const int d = i % opts.docs;
        // Two question/answer rounds per dialogue over distinct SUs.
        std::uniform_int_distribution<int> pick(0, spots - 1);
        const int first = pick(rng);
        int second = pick(rng);
        while (spots > 1 && second == first) second = pick(rng);

        json turns = json::array();
        for (int round = 0; round < 2; ++round) {
            const int spot = round == 0 ? first : second;
            const int p = spot / opts.sus_per_passage;
            const int s = spot % opts.sus_per_passage;
            const std::string cue = cue_word(d, p, s);
            std::uniform_int_distribution<int> ask(0, static_cast<int>(std::size(kAsk)) - 1);
            turns.push_back(json{{"role", "user"},
                                 {"text", std::string(kAsk[ask(rng)]) + " " + cue},
                                 {"grounding", nullptr}});
            turns.push_back(json{{"role", "agent"},
                                 {"text", "the notes say " + cue + " matters"},
                                 {"grounding",
                                  json{{"passage_id", "doc" + std::to_string(d) + "#p" +
                                                          std::to_string(p)},
                                       {"begin_su", s},
                                       {"end_su", s}}}});
        }
        json dial;
        dial["dial_id"] = "dial" + std::to_string(i);
        dial["doc_id"] = "doc" + std::to_string(d);
        dial["turns"] = std::move(turns);
        out << dial.dump() << "\n";
    }
}

}  // namespace knowid::corpus
