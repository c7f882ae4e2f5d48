#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace knowid::corpus {

enum class Role { user, agent };

const char* role_name(Role r);
Role role_from_name(const std::string& s);

// Atomic selectable piece of a passage (a span or sentence depending on how
// the document was segmented). char_span is half-open within the passage
// text, which is the SU texts joined by single spaces.
struct SemanticUnit {
    int su_id = 0;
    std::string text;
    int char_begin = 0;
    int char_end = 0;

    bool operator==(const SemanticUnit&) const = default;
};

struct Passage {
    std::string passage_id;
    std::string title;  // empty = untitled
    std::vector<SemanticUnit> units;

    std::string text() const;
    // SU texts begin..end joined by single spaces (both indices inclusive).
    std::string span_text(int begin_su, int end_su) const;

    bool operator==(const Passage&) const = default;
};

struct Document {
    std::string doc_id;
    std::string title;
    std::vector<Passage> passages;

    bool operator==(const Document&) const = default;
};

struct KnowledgeLabel {
    std::string passage_id;
    int begin_su = 0;
    int end_su = 0;

    bool operator==(const KnowledgeLabel&) const = default;
};

struct Turn {
    Role role = Role::user;
    std::string text;
    std::optional<KnowledgeLabel> grounding;
    // wow-like corpora: per-turn retrieved document ids (candidate pool).
    std::vector<std::string> candidate_docs;

    bool operator==(const Turn&) const = default;
};

struct Dialogue {
    std::string dial_id;
    std::string doc_id;  // doc2dial-like: the single grounding document
    std::vector<Turn> turns;
};

// One training/inference unit: an agent turn to predict. context[0] is the
// most recent preceding turn (the spec's u_1, always a user turn); history
// labels are keyed by the 1-based context index, so key 1 refers to u_1.
struct DialogueExample {
    std::string example_id;
    std::string doc_id;  // document of the gold passage (split bookkeeping)
    std::vector<Turn> context;
    std::vector<Passage> candidates;
    KnowledgeLabel gold;
    std::map<int, KnowledgeLabel> history_labels;

    bool operator==(const DialogueExample&) const = default;
};

// ---------------------------------------------------------------------------
// Segmentation

enum class SegmentStrategy { sections, sentences, whole };

SegmentStrategy strategy_from_name(const std::string& s);
const char* strategy_name(SegmentStrategy s);

struct RawSection {
    std::string title;
    std::vector<std::string> sus;
};

struct RawDocument {
    std::string doc_id;
    std::string title;
    std::vector<RawSection> sections;
};

// sections: one passage per section; sentences: one passage per SU;
// whole: a single passage covering the document. SU order is preserved.
// Throws DataError on documents with no SUs.
Document segment_document(const RawDocument& raw, SegmentStrategy strategy);

// ---------------------------------------------------------------------------
// Corpus loading

enum class CorpusFormat { doc2dial_like, wow_like };

CorpusFormat format_from_name(const std::string& s);
const char* format_name(CorpusFormat f);

struct Corpus {
    std::vector<Document> documents;
    std::vector<Dialogue> dialogues;
    // Grounding labels that spanned multiple SUs and were collapsed to their
    // first SU by the sentences strategy.
    long collapsed_span_labels = 0;

    const Document* find_document(const std::string& doc_id) const;
    const Passage* find_passage(const std::string& passage_id) const;
    void reindex();

private:
    std::unordered_map<std::string, size_t> doc_index_;
    std::unordered_map<std::string, std::pair<size_t, size_t>> passage_index_;
};

// Reads documents.jsonl and dialogues.jsonl from dir. Grounding labels in
// dialogues.jsonl always reference the sections segmentation; other
// strategies remap them. wow-like corpora get the "no passages used"
// pseudo-passage appended to every agent turn's candidate set.
Corpus load_corpus(const std::string& dir, CorpusFormat format,
                   SegmentStrategy strategy = SegmentStrategy::sections);

std::vector<RawDocument> read_raw_documents(const std::string& path);
void write_raw_documents(const std::vector<RawDocument>& docs, const std::string& path);
void write_segmented_documents(const std::vector<Document>& docs, const std::string& path);

// ---------------------------------------------------------------------------
// Example construction

struct SkipReport {
    long dropped_examples = 0;
    std::map<std::string, long> reasons;

    void drop(const std::string& reason) {
        ++dropped_examples;
        ++reasons[reason];
    }
    void save(const std::string& path) const;
};

struct BuildOptions {
    int max_candidates = 20;
    bool training = true;  // sample negatives; otherwise first-N passages
    uint64_t seed = 0;
};

// One example per labeled agent turn. Training: candidates are the gold
// passage plus negatives sampled uniformly without replacement, kept in
// document order. Inference: the pool's first max_candidates passages.
std::vector<DialogueExample> build_examples(const Corpus& corpus, const BuildOptions& opts,
                                            SkipReport* report = nullptr);

void save_examples(const std::vector<DialogueExample>& examples, const std::string& path);
std::vector<DialogueExample> load_examples(const std::string& path);

}  // namespace knowid::corpus
