#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace knowid::enc {

// Reserved marker ids. Markers live below the ordinary vocabulary and are
// never produced by tokenize(): bracket characters split into single-char
// tokens, so the literal text "[cls]" cannot collide with the marker.
enum Marker : int {
    kPad = 0,
    kUnk = 1,
    kCls = 2,
    kSep = 3,
    kUsr = 4,
    kAgt = 5,
    kMarkerCount = 6,
};

const char* marker_text(Marker m);

// Sequence tokenizer contract: ordinary text maps to ids >= kMarkerCount.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<int> tokenize(std::string_view text) const = 0;
    virtual int vocab_size() const = 0;  // markers included
};

// Whitespace + punctuation tokenizer with a corpus-built vocabulary.
// Lowercases; alphanumeric runs are tokens; every other non-space character
// is its own token. Out-of-vocabulary tokens map to [unk].
class BasicTokenizer : public Tokenizer {
public:
    BasicTokenizer() = default;
    explicit BasicTokenizer(std::vector<std::string> tokens);

    std::vector<int> tokenize(std::string_view text) const override;
    int vocab_size() const override { return kMarkerCount + static_cast<int>(tokens_.size()); }

    const std::vector<std::string>& tokens() const { return tokens_; }

    // Splits text into raw token strings (pre-vocabulary); exposed for
    // vocabulary construction and the word-level F1 metric tests.
    static std::vector<std::string> split(std::string_view text);

    // Frequency-then-lexicographic vocabulary over the given texts.
    static BasicTokenizer build(std::span<const std::string> texts, int max_vocab = 30000);

    // Vocabulary file: first line is a JSON header declaring the reserved
    // markers, then one token per line in id order.
    void save(const std::string& path) const;
    static BasicTokenizer load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;  // token -> id (offset past markers)
};

}  // namespace knowid::enc
