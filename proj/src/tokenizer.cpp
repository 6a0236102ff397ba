#include "haystack/tokenizer.hpp"

#include "haystack/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>

namespace haystack {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

std::optional<std::string> Tokenizer::first_token(std::string_view text) const {
    auto tokens = encode(text);
    if (tokens.empty()) return std::nullopt;
    return tokens.front().text;
}

std::vector<Token> WhitespaceTokenizer::encode(std::string_view text) const {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        std::size_t start = i;
        while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
        out.push_back({std::string(text.substr(start, i - start)), start, i});
    }
    return out;
}

BpeTokenizer::BpeTokenizer(const std::string& vocab_path) : vocab_path_(vocab_path) {
    std::ifstream in(vocab_path);
    if (!in) throw MissingFileError(vocab_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRecordError(vocab_path, 0, e.what());
    }
    if (!doc.contains("merges") || !doc["merges"].is_array()) {
        throw MalformedRecordError(vocab_path, 0, "vocabulary file needs a \"merges\" array");
    }
    int rank = 0;
    for (const auto& m : doc["merges"]) {
        if (!m.is_array() || m.size() != 2 || !m[0].is_string() || !m[1].is_string()) {
            throw MalformedRecordError(vocab_path, 0, "each merge must be a [left, right] pair");
        }
        merge_ranks_.emplace_back(m[0].get<std::string>() + '\x1f' + m[1].get<std::string>(), rank++);
    }
    std::sort(merge_ranks_.begin(), merge_ranks_.end());
}

int BpeTokenizer::rank_of(const std::string& left, const std::string& right) const {
    std::string key = left + '\x1f' + right;
    auto it = std::lower_bound(merge_ranks_.begin(), merge_ranks_.end(), key,
                               [](const auto& a, const std::string& b) { return a.first < b; });
    if (it != merge_ranks_.end() && it->first == key) return it->second;
    return -1;
}

void BpeTokenizer::apply_merges(std::vector<std::string>& pieces) const {
    if (merge_ranks_.empty()) return;
    while (pieces.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
            int r = rank_of(pieces[i], pieces[i + 1]);
            if (r >= 0 && r < best_rank) {
                best_rank = r;
                best_pos = i;
            }
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        pieces[best_pos] += pieces[best_pos + 1];
        pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
}

std::vector<Token> BpeTokenizer::encode(std::string_view text) const {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        bool space_run = is_space(static_cast<unsigned char>(text[i]));
        std::size_t start = i;
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i])) == space_run) ++i;

        std::vector<std::string> pieces;
        pieces.reserve(i - start);
        for (std::size_t b = start; b < i; ++b) pieces.emplace_back(1, text[b]);
        apply_merges(pieces);

        std::size_t at = start;
        for (auto& p : pieces) {
            std::size_t len = p.size();
            out.push_back({std::move(p), at, at + len});
            at += len;
        }
    }
    return out;
}

TokenizerPtr make_tokenizer(const std::string& tokenizer_id) {
    if (tokenizer_id == "whitespace" || tokenizer_id.empty()) {
        return std::make_shared<WhitespaceTokenizer>();
    }
    if (tokenizer_id.rfind("bpe:", 0) == 0) {
        return std::make_shared<BpeTokenizer>(tokenizer_id.substr(4));
    }
    throw ConfigError("unknown tokenizer id: " + tokenizer_id +
                      " (expected \"whitespace\" or \"bpe:<vocab file>\")");
}

} // namespace haystack
