#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace haystack {

struct Token {
    std::string text;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::string id() const = 0;
    virtual std::vector<Token> encode(std::string_view text) const = 0;

    std::size_t count(std::string_view text) const { return encode(text).size(); }

    // First token piece of `text`, or nullopt when text has no tokens.
    // Option distinctness validation compares these pieces.
    std::optional<std::string> first_token(std::string_view text) const;
};

// Tokens are maximal runs of non-whitespace bytes. The fixture default.
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::string id() const override { return "whitespace"; }
    std::vector<Token> encode(std::string_view text) const override;
};

// Byte-level BPE driven by a ranked merge list loaded from a JSON vocabulary
// file: {"merges": [["t","h"], ["th","e"], ...]}. Text is pre-segmented at
// whitespace boundaries (whitespace runs form their own segments), so token
// counts compose across "\n\n"-style separators. With an empty merge list
// this degenerates to a plain byte tokenizer.
class BpeTokenizer final : public Tokenizer {
public:
    explicit BpeTokenizer(const std::string& vocab_path);

    std::string id() const override { return "bpe:" + vocab_path_; }
    std::vector<Token> encode(std::string_view text) const override;

private:
    std::string vocab_path_;
    // merge pair "left\x1fright" -> rank
    std::vector<std::pair<std::string, int>> merge_ranks_;
    int rank_of(const std::string& left, const std::string& right) const;
    void apply_merges(std::vector<std::string>& pieces) const;
};

using TokenizerPtr = std::shared_ptr<const Tokenizer>;

// "whitespace" or "bpe:<vocab file path>".
TokenizerPtr make_tokenizer(const std::string& tokenizer_id);

} // namespace haystack
