#include "mhfa/forge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "mhfa/core/files.hpp"
#include "mhfa/core/parallel.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"

namespace mhfa::forge {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) || u >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::size_t count_sequence(const std::vector<std::string>& words, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > words.size()) return 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) ++hits;
    }
    return hits;
}

std::vector<fs::path> regular_files(const fs::path& folder) {
    if (!fs::is_directory(folder)) throw IoError(folder.string(), "not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(folder)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::string doc_id_for(const fs::path& folder, const fs::path& file) {
    return fs::relative(file, folder).generic_string();
}

}  // namespace

KeywordTable KeywordTable::parse(std::string_view tsv) {
    KeywordTable t;
    std::size_t lineno = 0;
    for (const auto& raw : split(tsv, '\n')) {
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("keyword table line " + std::to_string(lineno) + ": expected name<TAB>terms");
        }
        KeywordCategory c;
        c.name = trim(line.substr(0, tab));
        for (const auto& term : split(line.substr(tab + 1), ';')) {
            const auto t2 = trim(term);
            if (!t2.empty()) c.terms.push_back(t2);
        }
        if (c.name.empty() || c.terms.empty()) {
            throw ParseError("keyword table line " + std::to_string(lineno) + ": empty name or terms");
        }
        if (t.has(c.name)) throw ParseError("keyword table: duplicate category " + c.name);
        t.categories.push_back(std::move(c));
    }
    if (t.categories.empty()) throw ParseError("keyword table has no categories");
    return t;
}

KeywordTable KeywordTable::load(const fs::path& path) { return parse(read_file(path)); }

KeywordTable KeywordTable::builtin() { return parse(templates::get("keywords.tsv")); }

bool KeywordTable::has(std::string_view name) const {
    return std::any_of(categories.begin(), categories.end(), [&](const auto& c) { return c.name == name; });
}

std::size_t count_phrase(std::string_view text, std::string_view phrase) {
    return count_sequence(words_of(text), words_of(phrase));
}

nlohmann::ordered_json CorpusDoc::to_json() const {
    nlohmann::ordered_json j;
    j["doc_id"] = doc_id;
    j["source_path"] = source_path;
    j["category"] = category ? nlohmann::ordered_json(*category) : nlohmann::ordered_json(nullptr);
    j["token_count"] = token_count;
    j["cleaned"] = cleaned;
    return j;
}

FilterResult filter_by_keywords(const fs::path& folder, const KeywordTable& table, std::size_t min_hits) {
    if (min_hits == 0) throw ValidationError("min_hits", "keyword threshold must be >= 1");
    std::vector<std::vector<std::vector<std::string>>> phrases;
    for (const auto& c : table.categories) {
        auto& list = phrases.emplace_back();
        for (const auto& t : c.terms) list.push_back(words_of(t));
    }
    FilterResult result;
    for (const auto& file : regular_files(folder)) {
        std::string text;
        try {
            text = read_file(file);
        } catch (const Error& e) {
            result.errors.push_back({file.string(), e.what()});
            continue;
        }
        const auto words = words_of(text);
        std::optional<std::string> category;
        for (std::size_t ci = 0; ci < table.categories.size() && !category; ++ci) {
            std::size_t hits = 0;
            for (const auto& p : phrases[ci]) hits += count_sequence(words, p);
            if (hits >= min_hits) category = table.categories[ci].name;
        }
        if (!category) {
            result.unmatched.push_back(file.string());
            continue;
        }
        CorpusDoc d;
        d.doc_id = doc_id_for(folder, file);
        d.source_path = file.string();
        d.category = category;
        result.matched.push_back(std::move(d));
    }
    return result;
}

std::vector<CorpusDoc> list_general_docs(const fs::path& folder) {
    std::vector<CorpusDoc> docs;
    for (const auto& file : regular_files(folder)) {
        CorpusDoc d;
        d.doc_id = doc_id_for(folder, file);
        d.source_path = file.string();
        docs.push_back(std::move(d));
    }
    return docs;
}

void count_tokens(std::vector<CorpusDoc>& docs, gateway::Gateway& gw) {
    parallel_for(docs.size(), static_cast<std::size_t>(gw.options().inflight_cap), [&](std::size_t i) {
        docs[i].token_count = gw.score_logprobs(read_file(docs[i].source_path)).size();
    });
}

CleanResult clean_doc(std::string_view text, gateway::Gateway& gw, const gateway::GenParams& params) {
    CleanResult r;
    r.original = std::string(text);
    r.text = r.original;
    if (trim(text).empty()) {
        r.warning = "empty document skipped";
        return r;
    }
    const std::vector<gateway::ChatMessage> prompt = {
        {gateway::Role::user, fill_template(templates::get("clean_doc.txt"), {{"text", std::string(text)}})}};
    try {
        r.text = gw.chat(prompt, params).text;
        r.cleaned = true;
    } catch (const gateway::GatewayError& e) {
        r.warning = std::string("cleaning failed: ") + e.what();
    }
    return r;
}

nlohmann::ordered_json CorpusManifest::to_json() const {
    nlohmann::ordered_json j;
    j["target_ratio"] = target_ratio;
    j["mix_ratio"] = mix_ratio;
    j["seed"] = seed;
    j["domain_tokens"] = domain_tokens;
    j["general_tokens"] = general_tokens;
    auto docs = [](const std::vector<CorpusDoc>& v) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& d : v) arr.push_back(d.to_json());
        return arr;
    };
    j["domain_docs"] = docs(domain_docs);
    j["general_docs"] = docs(general_docs);
    j["dropped"] = dropped;
    return j;
}

CorpusManifest build_manifest(std::vector<CorpusDoc> domain_docs, std::vector<CorpusDoc> general_docs,
                              double ratio_general, double ratio_domain, std::uint64_t seed, double tolerance) {
    if (!(ratio_general > 0) || !(ratio_domain > 0) || !std::isfinite(ratio_general) || !std::isfinite(ratio_domain)) {
        throw ValidationError("ratio", "both sides of the mix ratio must be positive");
    }
    if (!(tolerance >= 0 && tolerance < 1)) throw ValidationError("tolerance", "tolerance must be in [0, 1)");
    auto total = [](const std::vector<CorpusDoc>& v) {
        std::uint64_t t = 0;
        for (const auto& d : v) t += d.token_count;
        return t;
    };
    if (domain_docs.empty() || total(domain_docs) == 0) throw ValidationError("domain_docs", "domain pool is empty");
    if (general_docs.empty() || total(general_docs) == 0) throw ValidationError("general_docs", "general pool is empty");

    const double r = ratio_general / ratio_domain;
    const double lo = r * (1 - tolerance);
    const double hi = r * (1 + tolerance);
    CorpusManifest m;
    m.target_ratio = r;
    m.seed = seed;

    auto downsample = [&](std::vector<CorpusDoc>& pool, auto keep_if) {
        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> keep(pool.size(), false);
        std::uint64_t kept = 0;
        for (auto i : order) {
            if (keep_if(kept + pool[i].token_count)) {
                keep[i] = true;
                kept += pool[i].token_count;
            }
        }
        std::vector<CorpusDoc> out;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (keep[i]) {
                out.push_back(std::move(pool[i]));
            } else {
                m.dropped.push_back(pool[i].doc_id);
            }
        }
        pool = std::move(out);
    };

    const double g0 = static_cast<double>(total(general_docs));
    const double d0 = static_cast<double>(total(domain_docs));
    if (g0 / d0 > hi) {
        downsample(general_docs, [&](std::uint64_t g) { return static_cast<double>(g) / d0 <= hi; });
    } else if (g0 / d0 < lo) {
        downsample(domain_docs, [&](std::uint64_t d) { return g0 / static_cast<double>(d) >= lo; });
    }
    std::sort(m.dropped.begin(), m.dropped.end());

    m.domain_docs = std::move(domain_docs);
    m.general_docs = std::move(general_docs);
    m.domain_tokens = total(m.domain_docs);
    m.general_tokens = total(m.general_docs);
    if (m.domain_tokens == 0 || m.general_tokens == 0) {
        throw Error("down-sampling emptied a pool; documents are too large for the requested ratio");
    }
    m.mix_ratio = static_cast<double>(m.general_tokens) / static_cast<double>(m.domain_tokens);
    if (m.mix_ratio < lo || m.mix_ratio > hi) {
        throw Error("cannot reach mix ratio " + format_rounded(r, 4) + " within tolerance; achieved " +
                    format_rounded(m.mix_ratio, 4));
    }
    return m;
}

}  // namespace mhfa::forge
