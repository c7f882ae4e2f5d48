#include "knowid/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include <json.hpp>

#include "knowid/errors.hpp"

namespace knowid::enc {

const char* marker_text(Marker m) {
    switch (m) {
        case kPad: return "[pad]";
        case kUnk: return "[unk]";
        case kCls: return "[cls]";
        case kSep: return "[sep]";
        case kUsr: return "[usr]";
        case kAgt: return "[agt]";
        default: return "";
    }
}

BasicTokenizer::BasicTokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (size_t i = 0; i < tokens_.size(); ++i)
        ids_.emplace(tokens_[i], kMarkerCount + static_cast<int>(i));
}

std::vector<std::string> BasicTokenizer::split(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            flush();
        } else if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else {
            flush();
            out.push_back(std::string(1, ch));
        }
    }
    flush();
    return out;
}

std::vector<int> BasicTokenizer::tokenize(std::string_view text) const {
    std::vector<int> out;
    for (const std::string& tok : split(text)) {
        auto it = ids_.find(tok);
        out.push_back(it == ids_.end() ? kUnk : it->second);
    }
    return out;
}

BasicTokenizer BasicTokenizer::build(std::span<const std::string> texts, int max_vocab) {
    std::map<std::string, long> counts;  // ordered for deterministic ties
    for (const std::string& t : texts)
        for (const std::string& tok : split(t)) ++counts[tok];

    std::vector<std::pair<std::string, long>> by_freq(counts.begin(), counts.end());
    std::stable_sort(by_freq.begin(), by_freq.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> tokens;
    const size_t cap = max_vocab > kMarkerCount ? static_cast<size_t>(max_vocab - kMarkerCount)
                                                : by_freq.size();
    for (const auto& [tok, n] : by_freq) {
        if (tokens.size() >= cap) break;
        tokens.push_back(tok);
    }
    return BasicTokenizer(std::move(tokens));
}

void BasicTokenizer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write vocabulary file: " + path);
    nlohmann::json header;
    for (int m = 0; m < kMarkerCount; ++m)
        header["markers"].push_back(marker_text(static_cast<Marker>(m)));
    out << header.dump() << "\n";
    for (const std::string& tok : tokens_) out << tok << "\n";
}

BasicTokenizer BasicTokenizer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty vocabulary file: " + path);
    const auto header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.contains("markers"))
        throw DataError("vocabulary file missing marker header: " + path);
    for (int m = 0; m < kMarkerCount; ++m)
        if (header["markers"][static_cast<size_t>(m)] != marker_text(static_cast<Marker>(m)))
            throw DataError("vocabulary marker table mismatch in " + path);
    std::vector<std::string> tokens;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) tokens.push_back(line);
    }
    return BasicTokenizer(std::move(tokens));
}

}  // namespace knowid::enc
