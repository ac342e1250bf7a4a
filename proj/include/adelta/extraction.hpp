#pragma once

// Optimization-free attribute deltas: subject-token embedding differences
// between positive and negative prompts, averaged over all expanded pairs.

#include "adelta/delta.hpp"
#include "adelta/model.hpp"
#include "adelta/prompt.hpp"

namespace adelta {

struct ExtractionResult {
  AttributeDelta delta;
  std::size_t pair_count = 0;
  std::vector<std::string> warnings;
};

// Multi-token subject spans are reduced by their row mean before the
// plus-minus subtraction. Pair differences are summed pairwise in double
// precision over the pairs sorted by (plus, minus) text, so the result does
// not depend on tuple or prefix order.
ExtractionResult extract_clip_diff_delta(const TextEncoder& encoder, const ContrastivePromptSet& set,
                                         ExpansionOptions opts = {});

// Row mean of the span rows.
std::vector<double> span_mean(const TokenizedPrompt& tp, const SubjectSpan& span);

// Pairwise (cascade) summation of equally sized vectors, in the given order.
std::vector<double> pairwise_sum(const std::vector<std::vector<double>>& items);

}  // namespace adelta
