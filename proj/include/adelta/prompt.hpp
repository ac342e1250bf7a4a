#pragma once

// Prompts, subject spans, and contrastive prompt sets.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adelta/tensor.hpp"

namespace adelta {

struct Token {
  std::int64_t id = 0;
  // Byte range into TokenizedPrompt::text; empty for special tokens.
  std::size_t char_begin = 0;
  std::size_t char_end = 0;
  bool special = false;
};

struct TokenizedPrompt {
  std::string text;
  std::vector<Token> tokens;
  Matrix embeddings;  // tokens.size() x embedding_dim
  std::string encoder_id;

  std::size_t size() const noexcept { return tokens.size(); }
  std::size_t non_special_count() const;
  std::vector<std::uint8_t> special_mask() const;
  std::string_view token_text(std::size_t i) const;
};

// Token range [start, end) of one subject occurrence.
struct SubjectSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string word;
  std::size_t occurrence = 0;

  std::size_t length() const noexcept { return end - start; }
  bool operator==(const SubjectSpan&) const = default;
};

// Selects which occurrence(s) of a subject word are targeted.
struct Occurrence {
  std::size_t index = 0;
  bool all = false;

  static Occurrence first() { return {}; }
  static Occurrence nth(std::size_t i) { return {i, false}; }
  static Occurrence every() { return {0, true}; }
  bool operator==(const Occurrence&) const = default;
};

// Throws SubjectNotFound, or AmbiguousSubword when the word only occurs
// inside a larger word (e.g. "man" in "woman").
SubjectSpan locate_subject(const TokenizedPrompt& tp, std::string_view word,
                           std::size_t occurrence = 0);

// Every whole-word occurrence; throws like locate_subject when there is none.
std::vector<SubjectSpan> locate_all(const TokenizedPrompt& tp, std::string_view word);

std::vector<SubjectSpan> resolve_spans(const TokenizedPrompt& tp, std::string_view word,
                                       Occurrence occ);

// Case-insensitive concatenation of the source text covered by the span.
std::string span_text(const TokenizedPrompt& tp, const SubjectSpan& span);

// One authored phrase with its subject marked by brackets,
// e.g. "old [person]".
struct MarkedPhrase {
  std::string text;     // brackets removed
  std::string subject;  // text inside the brackets
  std::size_t subject_begin = 0;

  static MarkedPhrase parse(std::string_view authored);
  std::string authored() const;
  std::string_view before_subject() const { return std::string_view(text).substr(0, subject_begin); }
  std::string_view after_subject() const {
    return std::string_view(text).substr(subject_begin + subject.size());
  }
};

struct PromptTuple {
  MarkedPhrase negative;
  MarkedPhrase neutral;
  MarkedPhrase positive;
};

struct ContrastivePromptSet {
  std::string attribute_name;
  std::vector<PromptTuple> tuples;
  std::vector<std::string> prefixes;
  std::vector<std::string> subject_nouns;

  // Throws InvalidArgument when a tuple mixes subjects or a list is empty.
  void validate() const;
};

struct ExpandedTriple {
  std::string minus;
  std::string neutral;
  std::string plus;
  std::string subject;

  bool operator==(const ExpandedTriple&) const = default;
};

struct ExpansionOptions {
  bool fix_articles = true;
};

// Prefix-major cartesian product prefixes x tuples.
std::vector<ExpandedTriple> expand_prompt_set(const ContrastivePromptSet& set,
                                              ExpansionOptions opts = {});

// Joins prefix and phrase, switching a trailing "a"/"an" of the prefix to
// match the phrase's first letter when fix_articles is set.
std::string join_prefix(std::string_view prefix, std::string_view phrase, bool fix_articles);

// Warnings for tuples whose attribute words follow the subject; a causal
// text encoder cannot fold those words into the subject token.
std::vector<std::string> causal_order_warnings(const ContrastivePromptSet& set);

std::string to_lower(std::string_view s);

}  // namespace adelta
