#include "haystack/niah.hpp"

#include "haystack/errors.hpp"

#include <cmath>

namespace haystack {

std::string plant_needle(const std::string& filler, const std::string& needle,
                         int context_tokens, double depth, const Tokenizer& tokenizer) {
    if (needle.empty()) throw EmptyNeedleError();
    auto filler_tokens = tokenizer.encode(filler);
    auto needle_len = tokenizer.count(needle);
    std::size_t budget = static_cast<std::size_t>(context_tokens) > needle_len
                             ? static_cast<std::size_t>(context_tokens) - needle_len
                             : 0;
    if (filler_tokens.size() < budget) throw FillerTooShortError(filler_tokens.size(), budget);

    std::string slice = budget == 0 ? std::string()
                                    : filler.substr(0, filler_tokens[budget - 1].byte_end);
    if (slice.find(needle) != std::string::npos) {
        throw HaystackError("needle already occurs in the filler corpus slice");
    }

    std::size_t insert_at =
        static_cast<std::size_t>(std::llround(depth * static_cast<double>(budget)));
    if (insert_at > budget) insert_at = budget;
    std::size_t byte_at = insert_at == 0 ? 0 : filler_tokens[insert_at - 1].byte_end;

    std::string text;
    text.reserve(slice.size() + needle.size() + 2);
    text.append(slice, 0, byte_at);
    if (!text.empty() && text.back() != '\n') text.push_back('\n');
    text += needle;
    if (byte_at < slice.size()) {
        text.push_back('\n');
        text.append(slice, byte_at, std::string::npos);
    }
    return text;
}

} // namespace haystack
