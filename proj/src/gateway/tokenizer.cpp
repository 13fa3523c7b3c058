#include "mhfa/gateway/tokenizer.hpp"

#include <cctype>

namespace mhfa::gateway {

namespace {

enum class Cls { letter, digit, space, newline, punct };

Cls classify(unsigned char c) {
    if (c >= 0x80 || std::isalpha(c)) return Cls::letter;
    if (std::isdigit(c)) return Cls::digit;
    if (c == '\n') return Cls::newline;
    if (std::isspace(c)) return Cls::space;
    return Cls::punct;
}

constexpr std::size_t kLetterChunk = 8;
constexpr std::size_t kDigitChunk = 3;

}  // namespace

std::vector<std::string> reference_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        Cls cls = classify(c);
        if (cls == Cls::newline) {
            tokens.emplace_back(1, '\n');
            ++i;
            continue;
        }
        if (cls == Cls::space) {
            std::size_t j = i;
            while (j < n && classify(static_cast<unsigned char>(text[j])) == Cls::space) ++j;
            // A lone trailing space before a word or number is carried into it.
            const bool next_joins = j < n && classify(static_cast<unsigned char>(text[j])) != Cls::newline &&
                                    classify(static_cast<unsigned char>(text[j])) != Cls::space;
            std::size_t run_end = next_joins && text[j - 1] == ' ' ? j - 1 : j;
            if (run_end > i) {
                tokens.emplace_back(text.substr(i, run_end - i));
                i = run_end;
                continue;
            }
            // Exactly one space that prefixes the next token.
            const auto next = static_cast<unsigned char>(text[j]);
            cls = classify(next);
            std::size_t k = j;
            const std::size_t limit = cls == Cls::letter ? kLetterChunk : cls == Cls::digit ? kDigitChunk : 1;
            while (k < n && k - j < limit && classify(static_cast<unsigned char>(text[k])) == cls) ++k;
            tokens.emplace_back(text.substr(i, k - i));
            i = k;
            continue;
        }
        const std::size_t limit = cls == Cls::letter ? kLetterChunk : cls == Cls::digit ? kDigitChunk : 1;
        std::size_t k = i;
        while (k < n && k - i < limit && classify(static_cast<unsigned char>(text[k])) == cls) ++k;
        tokens.emplace_back(text.substr(i, k - i));
        i = k;
    }
    return tokens;
}

}  // namespace mhfa::gateway
