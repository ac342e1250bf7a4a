#include "adelta/prompt.hpp"

#include <algorithm>
#include <cctype>

namespace adelta {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::size_t TokenizedPrompt::non_special_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return !t.special; }));
}

std::vector<std::uint8_t> TokenizedPrompt::special_mask() const {
  std::vector<std::uint8_t> mask(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) mask[i] = tokens[i].special ? 1 : 0;
  return mask;
}

std::string_view TokenizedPrompt::token_text(std::size_t i) const {
  const Token& t = tokens.at(i);
  return std::string_view(text).substr(t.char_begin, t.char_end - t.char_begin);
}

namespace {

// A run of adjacent non-special word tokens with no gap in the source text.
// Punctuation always stands alone, so "man," still matches "man".
struct WordGroup {
  std::size_t first_token;
  std::size_t last_token;  // inclusive
  std::string lower;
};

bool is_word_token(std::string_view text) {
  if (text.empty()) return false;
  const auto c = static_cast<unsigned char>(text.front());
  return std::isalnum(c) || c == '\'' || c == '-' || c >= 128;
}

std::vector<WordGroup> word_groups(const TokenizedPrompt& tp) {
  std::vector<WordGroup> groups;
  for (std::size_t i = 0; i < tp.tokens.size(); ++i) {
    const Token& tok = tp.tokens[i];
    if (tok.special) continue;
    const bool joins = !groups.empty() && groups.back().last_token + 1 == i &&
                       tp.tokens[i - 1].char_end == tok.char_begin && is_word_token(tp.token_text(i)) &&
                       is_word_token(tp.token_text(i - 1));
    if (joins) {
      groups.back().last_token = i;
      groups.back().lower += to_lower(tp.token_text(i));
    } else {
      groups.push_back({i, i, to_lower(tp.token_text(i))});
    }
  }
  return groups;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) parts.push_back(to_lower(s.substr(i, j - i)));
    i = j;
  }
  return parts;
}

struct MatchResult {
  std::vector<SubjectSpan> spans;
  bool partial = false;
};

MatchResult match_word(const TokenizedPrompt& tp, std::string_view word) {
  const auto parts = split_words(word);
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "subject word is empty");
  const auto groups = word_groups(tp);
  MatchResult result;
  for (std::size_t g = 0; g + parts.size() <= groups.size(); ++g) {
    bool ok = true;
    for (std::size_t k = 0; k < parts.size() && ok; ++k) {
      ok = groups[g + k].lower == parts[k];
      // Multi-word subjects must be adjacent token runs.
      if (ok && k > 0) ok = groups[g + k].first_token == groups[g + k - 1].last_token + 1;
    }
    if (ok) {
      SubjectSpan span;
      span.start = groups[g].first_token;
      span.end = groups[g + parts.size() - 1].last_token + 1;
      span.word = std::string(word);
      span.occurrence = result.spans.size();
      result.spans.push_back(std::move(span));
    }
  }
  if (parts.size() == 1) {
    for (const auto& grp : groups)
      if (grp.lower != parts[0] && grp.lower.find(parts[0]) != std::string::npos)
        result.partial = true;
  }
  return result;
}

[[noreturn]] void throw_not_found(const TokenizedPrompt& tp, std::string_view word, bool partial,
                                  std::size_t occurrence) {
  if (partial)
    throw Error(ErrorCode::AmbiguousSubword,
                "'" + std::string(word) + "' only occurs inside a larger word in '" + tp.text + "'");
  throw Error(ErrorCode::SubjectNotFound, "occurrence " + std::to_string(occurrence) + " of '" +
                                              std::string(word) + "' not found in '" + tp.text +
                                              "'");
}

}  // namespace

SubjectSpan locate_subject(const TokenizedPrompt& tp, std::string_view word,
                           std::size_t occurrence) {
  auto m = match_word(tp, word);
  if (occurrence >= m.spans.size()) throw_not_found(tp, word, m.spans.empty() && m.partial, occurrence);
  return m.spans[occurrence];
}

std::vector<SubjectSpan> locate_all(const TokenizedPrompt& tp, std::string_view word) {
  auto m = match_word(tp, word);
  if (m.spans.empty()) throw_not_found(tp, word, m.partial, 0);
  return std::move(m.spans);
}

std::vector<SubjectSpan> resolve_spans(const TokenizedPrompt& tp, std::string_view word,
                                       Occurrence occ) {
  if (occ.all) return locate_all(tp, word);
  return {locate_subject(tp, word, occ.index)};
}

std::string span_text(const TokenizedPrompt& tp, const SubjectSpan& span) {
  if (span.end > tp.size() || span.start >= span.end)
    throw Error(ErrorCode::SpanOutOfRange, "span outside prompt");
  const std::size_t begin = tp.tokens[span.start].char_begin;
  const std::size_t end = tp.tokens[span.end - 1].char_end;
  return to_lower(std::string_view(tp.text).substr(begin, end - begin));
}

MarkedPhrase MarkedPhrase::parse(std::string_view authored) {
  const auto open = authored.find('[');
  const auto close = authored.find(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open + 2)
    throw Error(ErrorCode::InvalidArgument,
                "phrase must mark its subject with [brackets]: '" + std::string(authored) + "'");
  if (authored.find('[', open + 1) != std::string_view::npos)
    throw Error(ErrorCode::InvalidArgument,
                "phrase marks more than one subject: '" + std::string(authored) + "'");
  MarkedPhrase p;
  p.subject = std::string(authored.substr(open + 1, close - open - 1));
  p.text = std::string(authored.substr(0, open)) + p.subject + std::string(authored.substr(close + 1));
  p.subject_begin = open;
  return p;
}

std::string MarkedPhrase::authored() const {
  return std::string(before_subject()) + "[" + subject + "]" + std::string(after_subject());
}

void ContrastivePromptSet::validate() const {
  if (tuples.empty()) throw Error(ErrorCode::InvalidArgument, "prompt set has no tuples");
  if (prefixes.empty()) throw Error(ErrorCode::InvalidArgument, "prompt set has no prefixes");
  for (const auto& t : tuples) {
    const auto s = to_lower(t.neutral.subject);
    if (to_lower(t.negative.subject) != s || to_lower(t.positive.subject) != s)
      throw Error(ErrorCode::InvalidArgument,
                  "tuple phrases use different subjects: '" + t.negative.text + "', '" +
                      t.neutral.text + "', '" + t.positive.text + "'");
  }
}

std::string join_prefix(std::string_view prefix, std::string_view phrase, bool fix_articles) {
  std::string p(prefix);
  while (!p.empty() && std::isspace(static_cast<unsigned char>(p.back()))) p.pop_back();
  if (p.empty()) return std::string(phrase);
  if (fix_articles && !phrase.empty()) {
    const auto last_space = p.find_last_of(' ');
    const std::size_t word_begin = last_space == std::string::npos ? 0 : last_space + 1;
    const std::string last = to_lower(std::string_view(p).substr(word_begin));
    if (last == "a" || last == "an") {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(phrase.front())));
      const bool vowel = std::string_view("aeiou").find(c) != std::string_view::npos;
      const bool upper = std::isupper(static_cast<unsigned char>(p[word_begin]));
      std::string article = vowel ? "an" : "a";
      if (upper) article[0] = 'A';
      p = p.substr(0, word_begin) + article;
    }
  }
  return p + " " + std::string(phrase);
}

std::vector<ExpandedTriple> expand_prompt_set(const ContrastivePromptSet& set,
                                              ExpansionOptions opts) {
  set.validate();
  std::vector<ExpandedTriple> out;
  out.reserve(set.prefixes.size() * set.tuples.size());
  for (const auto& prefix : set.prefixes) {
    for (const auto& t : set.tuples) {
      out.push_back({join_prefix(prefix, t.negative.text, opts.fix_articles),
                     join_prefix(prefix, t.neutral.text, opts.fix_articles),
                     join_prefix(prefix, t.positive.text, opts.fix_articles), t.neutral.subject});
    }
  }
  return out;
}

std::vector<std::string> causal_order_warnings(const ContrastivePromptSet& set) {
  std::vector<std::string> warnings;
  for (const auto& t : set.tuples) {
    if (t.negative.after_subject() != t.positive.after_subject())
      warnings.push_back("attribute words follow the subject in '" + t.negative.authored() +
                         "' / '" + t.positive.authored() +
                         "'; a causal encoder cannot fold them into the subject token");
  }
  return warnings;
}

}  // namespace adelta
