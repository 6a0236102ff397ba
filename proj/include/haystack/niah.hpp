#pragma once

#include "haystack/config.hpp"
#include "haystack/tokenizer.hpp"

#include <string>

namespace haystack {

// Filler context of ~`context_tokens` tokens with the needle sentence
// planted at the given fractional token depth. Verifies the needle is not
// already present in the filler slice before planting.
std::string plant_needle(const std::string& filler, const std::string& needle,
                         int context_tokens, double depth, const Tokenizer& tokenizer);

} // namespace haystack
