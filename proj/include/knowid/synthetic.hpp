#pragma once

#include <cstdint>
#include <string>

namespace knowid::corpus {

// Synthetic doc2dial-like corpus for overfit and pipeline tests. Each agent
// turn's gold SU carries a cue word that also appears in the immediately
// preceding user turn, so the mapping is deterministic and separable.
struct SyntheticOptions {
    int dialogues = 32;
    int docs = 4;
    int passages_per_doc = 4;
    int sus_per_passage = 4;
    uint64_t seed = 7;
};

// Writes documents.jsonl and dialogues.jsonl into out_dir. Byte-identical
// output for identical options.
void generate_synthetic(const SyntheticOptions& opts, const std::string& out_dir);

}  // namespace knowid::corpus
