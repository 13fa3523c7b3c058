#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mhfa::gateway {

/// Tokenizer used by the mock backend and for offline token budgets. It
/// follows the pre-tokenization of common byte-level BPE vocabularies:
/// a single leading space joins the following word, letter runs are cut
/// every 8 bytes, digit runs every 3 digits, each punctuation byte and each
/// newline stands alone, and other whitespace runs form their own token.
/// Concatenating the tokens always reproduces `text`.
std::vector<std::string> reference_tokenize(std::string_view text);

}  // namespace mhfa::gateway
