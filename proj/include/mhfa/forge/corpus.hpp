#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhfa/gateway/gateway.hpp"

namespace mhfa::forge {

struct KeywordCategory {
    std::string name;                ///< slug, e.g. "substance_abuse"
    std::vector<std::string> terms;  ///< phrases, matched as whole words
};

/// Categories in priority order; earlier categories win ties.
struct KeywordTable {
    std::vector<KeywordCategory> categories;

    /// Tab-separated lines "name<TAB>term1;term2"; '#' starts a comment.
    static KeywordTable parse(std::string_view tsv);
    static KeywordTable load(const std::filesystem::path& path);
    /// The shipped thirteen-category table.
    static KeywordTable builtin();

    bool has(std::string_view name) const;
};

/// Case-insensitive whole-word occurrences of `phrase` in `text`.
std::size_t count_phrase(std::string_view text, std::string_view phrase);

struct CorpusDoc {
    std::string doc_id;
    std::string source_path;
    std::optional<std::string> category;  ///< empty for general-pool documents
    std::size_t token_count = 0;
    bool cleaned = false;

    nlohmann::ordered_json to_json() const;
};

struct DocError {
    std::string path;
    std::string message;
};

struct FilterResult {
    std::vector<CorpusDoc> matched;
    std::vector<std::string> unmatched;
    std::vector<DocError> errors;
};

/// Assigns each plain-text file under `folder` (recursively, sorted by path)
/// to the first category whose terms occur at least `min_hits` times in total.
FilterResult filter_by_keywords(const std::filesystem::path& folder, const KeywordTable& table,
                                std::size_t min_hits = 3);

/// Lists every regular file under `folder` as an uncategorized general-pool document.
std::vector<CorpusDoc> list_general_docs(const std::filesystem::path& folder);

/// Fills token_count for each document by scoring its file through the gateway.
/// Calls run concurrently; the gateway bounds how many are in flight.
void count_tokens(std::vector<CorpusDoc>& docs, gateway::Gateway& gw);

struct CleanResult {
    std::string text;      ///< cleaned text, or the original when cleaning failed or was skipped
    std::string original;  ///< always the input
    bool cleaned = false;
    std::string warning;   ///< why cleaning did not happen
};

/// Runs the shipped cleaning prompt over one document's text.
CleanResult clean_doc(std::string_view text, gateway::Gateway& gw, const gateway::GenParams& params = {});

struct CorpusManifest {
    std::vector<CorpusDoc> domain_docs;
    std::vector<CorpusDoc> general_docs;
    std::vector<std::string> dropped;  ///< doc ids removed by down-sampling
    std::uint64_t domain_tokens = 0;
    std::uint64_t general_tokens = 0;
    double target_ratio = 0;  ///< general : domain
    double mix_ratio = 0;     ///< achieved general : domain
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
};

/// Mixes the two pools at general:domain = ratio_general:ratio_domain within
/// ±tolerance (relative), down-sampling the over-represented pool in a seeded
/// random order. Throws ValidationError for empty pools or a degenerate ratio,
/// Error when the tolerance band cannot be reached.
CorpusManifest build_manifest(std::vector<CorpusDoc> domain_docs, std::vector<CorpusDoc> general_docs,
                              double ratio_general, double ratio_domain, std::uint64_t seed,
                              double tolerance = 0.05);

}  // namespace mhfa::forge
