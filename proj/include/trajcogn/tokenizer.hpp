#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trajcogn {

// Byte-level tokenizer: one token per byte, vocabulary of exactly 256. Fully
// reversible on any input, which keeps the text side of the pipeline free of
// out-of-vocabulary handling.
inline constexpr int kByteVocabSize = 256;

inline std::vector<int> tokenize(const std::string& text) {
    std::vector<int> tokens;
    tokens.reserve(text.size());
    for (unsigned char ch : text) {
        tokens.push_back(static_cast<int>(ch));
    }
    return tokens;
}

inline std::string detokenize(const std::vector<int>& tokens) {
    std::string text;
    text.reserve(tokens.size());
    for (int t : tokens) {
        text.push_back(static_cast<char>(static_cast<unsigned char>(t)));
    }
    return text;
}

}  // namespace trajcogn
