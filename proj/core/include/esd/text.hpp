#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace esd::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Word-level tokenizer shared by the vocabulary, the model and every metric.
/// Lowercases ASCII, splits on whitespace, and emits each ASCII punctuation
/// character as its own token. Apostrophes between letters stay inside the
/// word ("i'm", "job's").
std::vector<std::string> tokenize(std::string_view s);

/// Inverse of tokenize up to whitespace: joins with single spaces and glues
/// closing punctuation to the previous word.
std::string detokenize(const std::vector<std::string>& tokens);

/// Collapses runs of whitespace and trims.
std::string squeeze_spaces(std::string_view s);

}  // namespace esd::text
