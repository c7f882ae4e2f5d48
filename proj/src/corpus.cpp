#include "knowid/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "knowid/errors.hpp"

using nlohmann::json;

namespace knowid::corpus {

namespace {

constexpr const char* kNoneDocId = "none";
constexpr const char* kNonePassageText = "no passages used";

std::vector<json> read_jsonl(const std::string& path, bool required) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (required) throw DataError("cannot open " + path);
        return {};
    }
    std::vector<json> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON record");
        records.push_back(std::move(j));
    }
    return records;
}

Passage make_passage(std::string id, std::string title, const std::vector<std::string>& su_texts) {
    Passage p;
    p.passage_id = std::move(id);
    p.title = std::move(title);
    int offset = 0;
    for (size_t i = 0; i < su_texts.size(); ++i) {
        SemanticUnit su;
        su.su_id = static_cast<int>(i);
        su.text = su_texts[i];
        su.char_begin = offset;
        su.char_end = offset + static_cast<int>(su.text.size());
        offset = su.char_end + 1;  // single joining space
        p.units.push_back(std::move(su));
    }
    return p;
}

std::string section_passage_id(const std::string& doc_id, size_t section) {
    return doc_id + "#p" + std::to_string(section);
}

std::string sentence_passage_id(const std::string& doc_id, size_t section, size_t su) {
    return doc_id + "#p" + std::to_string(section) + "." + std::to_string(su);
}

// Remaps a sections-space label into the target segmentation. Returns nullopt
// for unresolvable references; collapsed is incremented when a multi-SU span
// is reduced to its first SU by the sentences strategy. SU bounds are only
// validated where remapping must index into them; build_examples performs the
// authoritative bounds check and skip accounting.
std::optional<KnowledgeLabel> remap_label(const KnowledgeLabel& label, const RawDocument& raw,
                                          SegmentStrategy strategy, long* collapsed) {
    // Locate the section index from the sections-space passage id.
    size_t section = raw.sections.size();
    for (size_t s = 0; s < raw.sections.size(); ++s) {
        if (section_passage_id(raw.doc_id, s) == label.passage_id) {
            section = s;
            break;
        }
    }
    if (section == raw.sections.size()) return std::nullopt;
    const auto& sus = raw.sections[section].sus;

    switch (strategy) {
        case SegmentStrategy::sections:
            return label;
        case SegmentStrategy::sentences: {
            if (label.begin_su < 0 || label.begin_su >= static_cast<int>(sus.size()))
                return std::nullopt;
            if (label.end_su != label.begin_su && collapsed) ++*collapsed;
            KnowledgeLabel out;
            out.passage_id = sentence_passage_id(raw.doc_id, section,
                                                 static_cast<size_t>(label.begin_su));
            out.begin_su = 0;
            out.end_su = 0;
            return out;
        }
        case SegmentStrategy::whole: {
            if (label.begin_su < 0 || label.end_su < label.begin_su ||
                label.end_su >= static_cast<int>(sus.size()))
                return std::nullopt;
            int offset = 0;
            for (size_t s = 0; s < section; ++s)
                offset += static_cast<int>(raw.sections[s].sus.size());
            KnowledgeLabel out;
            out.passage_id = raw.doc_id + "#all";
            out.begin_su = offset + label.begin_su;
            out.end_su = offset + label.end_su;
            return out;
        }
    }
    return std::nullopt;
}

}  // namespace

const char* role_name(Role r) { return r == Role::user ? "user" : "agent"; }

Role role_from_name(const std::string& s) {
    if (s == "user") return Role::user;
    if (s == "agent") return Role::agent;
    throw DataError("unknown turn role: " + s);
}

SegmentStrategy strategy_from_name(const std::string& s) {
    if (s == "sections") return SegmentStrategy::sections;
    if (s == "sentences") return SegmentStrategy::sentences;
    if (s == "whole") return SegmentStrategy::whole;
    throw UsageError("unknown segmentation strategy: " + s);
}

const char* strategy_name(SegmentStrategy s) {
    switch (s) {
        case SegmentStrategy::sections: return "sections";
        case SegmentStrategy::sentences: return "sentences";
        case SegmentStrategy::whole: return "whole";
    }
    return "?";
}

CorpusFormat format_from_name(const std::string& s) {
    if (s == "doc2dial-like") return CorpusFormat::doc2dial_like;
    if (s == "wow-like") return CorpusFormat::wow_like;
    throw UsageError("unknown corpus format: " + s);
}

const char* format_name(CorpusFormat f) {
    return f == CorpusFormat::doc2dial_like ? "doc2dial-like" : "wow-like";
}

std::string Passage::text() const {
    std::string out;
    for (size_t i = 0; i < units.size(); ++i) {
        if (i) out.push_back(' ');
        out += units[i].text;
    }
    return out;
}

std::string Passage::span_text(int begin_su, int end_su) const {
    std::string out;
    for (int i = begin_su; i <= end_su && i < static_cast<int>(units.size()); ++i) {
        if (i > begin_su) out.push_back(' ');
        out += units[static_cast<size_t>(i)].text;
    }
    return out;
}

Document segment_document(const RawDocument& raw, SegmentStrategy strategy) {
    size_t total_sus = 0;
    for (const auto& sec : raw.sections) total_sus += sec.sus.size();
    if (total_sus == 0) throw DataError("document has no semantic units: " + raw.doc_id);

    Document doc;
    doc.doc_id = raw.doc_id;
    doc.title = raw.title;
    switch (strategy) {
        case SegmentStrategy::sections:
            for (size_t s = 0; s < raw.sections.size(); ++s) {
                if (raw.sections[s].sus.empty()) continue;
                doc.passages.push_back(make_passage(section_passage_id(raw.doc_id, s),
                                                    raw.sections[s].title, raw.sections[s].sus));
            }
            break;
        case SegmentStrategy::sentences:
            for (size_t s = 0; s < raw.sections.size(); ++s)
                for (size_t u = 0; u < raw.sections[s].sus.size(); ++u)
                    doc.passages.push_back(make_passage(sentence_passage_id(raw.doc_id, s, u),
                                                        raw.sections[s].title,
                                                        {raw.sections[s].sus[u]}));
            break;
        case SegmentStrategy::whole: {
            std::vector<std::string> all;
            for (const auto& sec : raw.sections)
                all.insert(all.end(), sec.sus.begin(), sec.sus.end());
            doc.passages.push_back(make_passage(raw.doc_id + "#all", raw.title, all));
            break;
        }
    }
    return doc;
}

const Document* Corpus::find_document(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    return it == doc_index_.end() ? nullptr : &documents[it->second];
}

const Passage* Corpus::find_passage(const std::string& passage_id) const {
    auto it = passage_index_.find(passage_id);
    if (it == passage_index_.end()) return nullptr;
    return &documents[it->second.first].passages[it->second.second];
}

void Corpus::reindex() {
    doc_index_.clear();
    passage_index_.clear();
    for (size_t d = 0; d < documents.size(); ++d) {
        doc_index_[documents[d].doc_id] = d;
        for (size_t p = 0; p < documents[d].passages.size(); ++p)
            passage_index_[documents[d].passages[p].passage_id] = {d, p};
    }
}

std::vector<RawDocument> read_raw_documents(const std::string& path) {
    std::vector<RawDocument> out;
    for (const json& j : read_jsonl(path, /*required=*/true)) {
        RawDocument doc;
        doc.doc_id = j.at("doc_id").get<std::string>();
        doc.title = j.value("title", "");
        for (const json& sec : j.value("sections", json::array())) {
            RawSection s;
            s.title = sec.value("title", "");
            for (const json& su : sec.value("sus", json::array()))
                s.sus.push_back(su.at("text").get<std::string>());
            doc.sections.push_back(std::move(s));
        }
        out.push_back(std::move(doc));
    }
    return out;
}

void write_raw_documents(const std::vector<RawDocument>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path);
    for (const RawDocument& doc : docs) {
        json j;
        j["doc_id"] = doc.doc_id;
        j["title"] = doc.title;
        j["sections"] = json::array();
        for (const RawSection& sec : doc.sections) {
            json js;
            js["title"] = sec.title;
            js["sus"] = json::array();
            for (const std::string& su : sec.sus) js["sus"].push_back(json{{"text", su}});
            j["sections"].push_back(std::move(js));
        }
        out << j.dump() << "\n";
    }
}

void write_segmented_documents(const std::vector<Document>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path);
    for (const Document& doc : docs) {
        json j;
        j["doc_id"] = doc.doc_id;
        j["title"] = doc.title;
        j["passages"] = json::array();
        for (const Passage& p : doc.passages) {
            json jp;
            jp["passage_id"] = p.passage_id;
            jp["title"] = p.title;
            jp["sus"] = json::array();
            for (const SemanticUnit& su : p.units) jp["sus"].push_back(su.text);
            j["passages"].push_back(std::move(jp));
        }
        out << j.dump() << "\n";
    }
}

Corpus load_corpus(const std::string& dir, CorpusFormat format, SegmentStrategy strategy) {
    Corpus corpus;
    const std::vector<RawDocument> raws = read_raw_documents(dir + "/documents.jsonl");
    std::unordered_map<std::string, const RawDocument*> raw_by_id;
    for (const RawDocument& raw : raws) {
        corpus.documents.push_back(segment_document(raw, strategy));
        raw_by_id[raw.doc_id] = &raw;
    }

    if (format == CorpusFormat::wow_like) {
        // Pseudo-document backing the "no passages used" choice.
        Document none;
        none.doc_id = kNoneDocId;
        none.title = kNonePassageText;
        none.passages.push_back(
            make_passage(std::string(kNoneDocId) + "#p0", "", {kNonePassageText}));
        corpus.documents.push_back(std::move(none));
    }
    corpus.reindex();

    std::vector<std::string> bad_dialogues;
    for (const json& j : read_jsonl(dir + "/dialogues.jsonl", /*required=*/true)) {
        Dialogue dial;
        dial.dial_id = j.at("dial_id").get<std::string>();
        dial.doc_id = j.value("doc_id", "");
        bool ok = true;
        if (format == CorpusFormat::doc2dial_like) {
            if (dial.doc_id.empty() || corpus.find_document(dial.doc_id) == nullptr) ok = false;
        }
        for (const json& jt : j.value("turns", json::array())) {
            Turn turn;
            turn.role = role_from_name(jt.at("role").get<std::string>());
            turn.text = jt.value("text", "");
            for (const json& cd : jt.value("candidate_docs", json::array())) {
                const std::string cid = cd.get<std::string>();
                if (corpus.find_document(cid) == nullptr) ok = false;
                turn.candidate_docs.push_back(cid);
            }
            if (format == CorpusFormat::wow_like && turn.role == Role::agent)
                turn.candidate_docs.push_back(kNoneDocId);
            if (jt.contains("grounding") && !jt.at("grounding").is_null()) {
                KnowledgeLabel label;
                const json& jg = jt.at("grounding");
                label.passage_id = jg.at("passage_id").get<std::string>();
                label.begin_su = jg.at("begin_su").get<int>();
                label.end_su = jg.at("end_su").get<int>();
                // "none" labels bypass remapping: the pseudo-passage is not
                // part of any raw document.
                if (label.passage_id.rfind(std::string(kNoneDocId) + "#", 0) == 0) {
                    turn.grounding = label;
                } else {
                    const std::string ref_doc = label.passage_id.substr(0, label.passage_id.find('#'));
                    auto rit = raw_by_id.find(ref_doc);
                    if (rit == raw_by_id.end()) {
                        ok = false;
                    } else {
                        auto remapped = remap_label(label, *rit->second, strategy,
                                                    &corpus.collapsed_span_labels);
                        if (!remapped || corpus.find_passage(remapped->passage_id) == nullptr)
                            ok = false;
                        else
                            turn.grounding = *remapped;
                    }
                }
            }
            dial.turns.push_back(std::move(turn));
        }
        if (!ok) {
            bad_dialogues.push_back(dial.dial_id);
            continue;
        }
        corpus.dialogues.push_back(std::move(dial));
    }

    if (!bad_dialogues.empty()) {
        std::string msg = "dialogues with unresolved document or passage references:";
        for (const std::string& id : bad_dialogues) msg += " " + id;
        throw DataError(msg);
    }
    return corpus;
}

void SkipReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path);
    json j;
    j["dropped_examples"] = dropped_examples;
    j["reasons"] = json::object();
    for (const auto& [k, v] : reasons) j["reasons"][k] = v;
    out << j.dump(2) << "\n";
}

std::vector<DialogueExample> build_examples(const Corpus& corpus, const BuildOptions& opts,
                                            SkipReport* report) {
    if (opts.max_candidates < 1) throw UsageError("max_candidates must be >= 1");
    SkipReport local;
    SkipReport& skip = report ? *report : local;
    std::mt19937_64 rng(opts.seed);
    std::vector<DialogueExample> out;

    for (const Dialogue& dial : corpus.dialogues) {
        for (size_t t = 0; t < dial.turns.size(); ++t) {
            const Turn& turn = dial.turns[t];
            if (turn.role != Role::agent || !turn.grounding) continue;
            if (t == 0 || dial.turns[t - 1].role != Role::user) {
                skip.drop("agent_turn_without_user_context");
                continue;
            }

            // Candidate pool in document order, deduplicated by passage id.
            std::vector<const Passage*> pool;
            {
                std::vector<std::string> doc_ids;
                if (!turn.candidate_docs.empty())
                    doc_ids = turn.candidate_docs;
                else
                    doc_ids.push_back(dial.doc_id);
                std::vector<std::string> seen;
                for (const std::string& did : doc_ids) {
                    const Document* doc = corpus.find_document(did);
                    if (!doc) continue;
                    for (const Passage& p : doc->passages) {
                        if (std::find(seen.begin(), seen.end(), p.passage_id) != seen.end())
                            continue;
                        seen.push_back(p.passage_id);
                        pool.push_back(&p);
                    }
                }
            }

            const KnowledgeLabel& gold = *turn.grounding;
            int gold_pos = -1;
            for (size_t i = 0; i < pool.size(); ++i)
                if (pool[i]->passage_id == gold.passage_id) gold_pos = static_cast<int>(i);

            if (opts.training && gold_pos < 0) {
                skip.drop("gold_passage_not_in_pool");
                continue;
            }
            if (gold_pos >= 0) {
                const Passage& gp = *pool[static_cast<size_t>(gold_pos)];
                if (gold.begin_su < 0 || gold.end_su < gold.begin_su ||
                    gold.end_su >= static_cast<int>(gp.units.size())) {
                    skip.drop("gold_span_out_of_range");
                    continue;
                }
            }

            // Select candidates.
            std::vector<size_t> chosen;
            if (opts.training) {
                chosen.push_back(static_cast<size_t>(gold_pos));
                std::vector<size_t> negatives;
                for (size_t i = 0; i < pool.size(); ++i)
                    if (static_cast<int>(i) != gold_pos) negatives.push_back(i);
                // Uniform sample without replacement, seeded by the run RNG.
                const size_t want =
                    std::min(negatives.size(), static_cast<size_t>(opts.max_candidates - 1));
                for (size_t k = 0; k < want; ++k) {
                    std::uniform_int_distribution<size_t> pick(k, negatives.size() - 1);
                    std::swap(negatives[k], negatives[pick(rng)]);
                    chosen.push_back(negatives[k]);
                }
            } else {
                for (size_t i = 0;
                     i < pool.size() && i < static_cast<size_t>(opts.max_candidates); ++i)
                    chosen.push_back(i);
            }
            std::sort(chosen.begin(), chosen.end());  // keep document order

            DialogueExample ex;
            ex.example_id = dial.dial_id + "#t" + std::to_string(t);
            for (size_t i : chosen) ex.candidates.push_back(*pool[i]);
            ex.gold = gold;
            const std::string::size_type hash = gold.passage_id.find('#');
            ex.doc_id = hash == std::string::npos ? gold.passage_id
                                                  : gold.passage_id.substr(0, hash);

            // Context: preceding turns, most recent first.
            for (size_t i = t; i-- > 0;) {
                Turn ctx = dial.turns[i];
                ctx.candidate_docs.clear();
                ex.context.push_back(std::move(ctx));
            }

            // History labels resolvable within this candidate set.
            for (size_t i = 0; i < ex.context.size(); ++i) {
                const Turn& h = ex.context[i];
                if (!h.grounding) continue;
                const auto cand =
                    std::find_if(ex.candidates.begin(), ex.candidates.end(), [&](const Passage& p) {
                        return p.passage_id == h.grounding->passage_id;
                    });
                if (cand == ex.candidates.end()) continue;
                if (h.grounding->begin_su < 0 || h.grounding->end_su < h.grounding->begin_su ||
                    h.grounding->end_su >= static_cast<int>(cand->units.size()))
                    continue;
                ex.history_labels[static_cast<int>(i) + 1] = *h.grounding;
            }

            out.push_back(std::move(ex));
        }
    }
    return out;
}

namespace {

json passage_to_json(const Passage& p) {
    json jp;
    jp["passage_id"] = p.passage_id;
    jp["title"] = p.title;
    jp["sus"] = json::array();
    for (const SemanticUnit& su : p.units) jp["sus"].push_back(su.text);
    return jp;
}

Passage passage_from_json(const json& jp) {
    std::vector<std::string> sus;
    for (const json& su : jp.at("sus")) sus.push_back(su.get<std::string>());
    return make_passage(jp.at("passage_id").get<std::string>(), jp.value("title", ""), sus);
}

json label_to_json(const KnowledgeLabel& l) {
    return json{{"passage_id", l.passage_id}, {"begin_su", l.begin_su}, {"end_su", l.end_su}};
}

KnowledgeLabel label_from_json(const json& j) {
    KnowledgeLabel l;
    l.passage_id = j.at("passage_id").get<std::string>();
    l.begin_su = j.at("begin_su").get<int>();
    l.end_su = j.at("end_su").get<int>();
    return l;
}

}  // namespace

void save_examples(const std::vector<DialogueExample>& examples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write " + path);
    for (const DialogueExample& ex : examples) {
        json j;
        j["example_id"] = ex.example_id;
        j["doc_id"] = ex.doc_id;
        j["context"] = json::array();
        for (const Turn& t : ex.context) {
            json jt;
            jt["role"] = role_name(t.role);
            jt["text"] = t.text;
            jt["grounding"] = t.grounding ? label_to_json(*t.grounding) : json(nullptr);
            j["context"].push_back(std::move(jt));
        }
        j["candidates"] = json::array();
        for (const Passage& p : ex.candidates) j["candidates"].push_back(passage_to_json(p));
        j["gold"] = label_to_json(ex.gold);
        j["history"] = json::array();
        for (const auto& [idx, label] : ex.history_labels) {
            json jh = label_to_json(label);
            jh["turn"] = idx;
            j["history"].push_back(std::move(jh));
        }
        out << j.dump() << "\n";
    }
}

std::vector<DialogueExample> load_examples(const std::string& path) {
    std::vector<DialogueExample> out;
    for (const json& j : read_jsonl(path, /*required=*/true)) {
        DialogueExample ex;
        ex.example_id = j.at("example_id").get<std::string>();
        ex.doc_id = j.value("doc_id", "");
        for (const json& jt : j.at("context")) {
            Turn t;
            t.role = role_from_name(jt.at("role").get<std::string>());
            t.text = jt.value("text", "");
            if (jt.contains("grounding") && !jt.at("grounding").is_null())
                t.grounding = label_from_json(jt.at("grounding"));
            ex.context.push_back(std::move(t));
        }
        for (const json& jp : j.at("candidates")) ex.candidates.push_back(passage_from_json(jp));
        ex.gold = label_from_json(j.at("gold"));
        for (const json& jh : j.value("history", json::array()))
            ex.history_labels[jh.at("turn").get<int>()] = label_from_json(jh);
        if (ex.context.empty() || ex.context.front().role != Role::user)
            throw DataError("example " + ex.example_id + ": context must start with a user turn");
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace knowid::corpus
