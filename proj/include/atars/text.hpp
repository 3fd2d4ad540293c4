#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace atars::text {

// ASCII case-fold; the corpora are English-language review text.
std::string casefold(std::string_view s);

std::string trim(std::string_view s);

// Collapses runs of whitespace into single spaces and trims the ends.
std::string normalize_whitespace(std::string_view s);

// Dedup key for aspect surfaces: case-folded + whitespace-normalized.
std::string surface_key(std::string_view s);

// Splits on sentence-final ./?/! boundaries, keeping the terminator.
// Trailing text without a terminator counts as a sentence. Empty chunks
// are dropped.
std::vector<std::string> split_sentences(std::string_view s);

// Word tokens for span metrics: punctuation stripped, case-folded,
// whitespace split. No stemming.
std::vector<std::string> tokenize_words(std::string_view s);

bool contains_casefold(std::string_view haystack, std::string_view needle);

std::string sha256_hex(std::string_view data);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replaces every "{name}" placeholder with its value; throws SlotMismatch
// on a placeholder with no value.
std::string substitute_placeholders(
    std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

}  // namespace atars::text
