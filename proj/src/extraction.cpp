#include "adelta/extraction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

#include "adelta/kernels.hpp"
#include "adelta/prompt_set_io.hpp"
#include "adelta/random.hpp"

namespace adelta {

std::string_view to_string(DeltaMethod m) {
  switch (m) {
    case DeltaMethod::ClipDiff: return "clip_diff";
    case DeltaMethod::Learned: return "learned";
    case DeltaMethod::PairInversionMasked: return "pair_inversion_masked";
  }
  return "unknown";
}

DeltaMethod parse_delta_method(std::string_view s) {
  if (s == "clip_diff") return DeltaMethod::ClipDiff;
  if (s == "learned") return DeltaMethod::Learned;
  if (s == "pair_inversion_masked") return DeltaMethod::PairInversionMasked;
  throw Error(ErrorCode::InvalidArgument, "unknown delta method '" + std::string(s) + "'");
}

double AttributeDelta::norm() const {
  double s = 0.0;
  for (float v : vector) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

std::string json_digest(const nlohmann::json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<double> span_mean(const TokenizedPrompt& tp, const SubjectSpan& span) {
  if (span.end > tp.size() || span.start >= span.end)
    throw Error(ErrorCode::SpanOutOfRange, "span outside prompt");
  std::vector<double> mean(tp.embeddings.cols(), 0.0);
  for (std::size_t r = span.start; r < span.end; ++r) kernels::axpy(1.0, tp.embeddings.row(r), mean);
  if (span.length() > 1) {
    const double n = static_cast<double>(span.length());
    for (auto& v : mean) v /= n;
  }
  return mean;
}

std::vector<double> pairwise_sum(const std::vector<std::vector<double>>& items) {
  if (items.empty()) return {};
  std::vector<std::vector<double>> level = items;
  while (level.size() > 1) {
    std::vector<std::vector<double>> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      std::vector<double> s = level[i];
      kernels::axpy(1.0, level[i + 1], s);
      next.push_back(std::move(s));
    }
    if (level.size() % 2) next.push_back(std::move(level.back()));
    level = std::move(next);
  }
  return level.front();
}

namespace {

TokenizedPrompt encode_in_budget(const TextEncoder& encoder, const std::string& prompt) {
  try {
    return encoder.encode(prompt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::PromptTooLong)
      throw Error(ErrorCode::EncoderMismatch,
                  "'" + prompt + "' exceeds the token budget of " + encoder.id());
    throw;
  }
}

}  // namespace

ExtractionResult extract_clip_diff_delta(const TextEncoder& encoder, const ContrastivePromptSet& set,
                                         ExpansionOptions opts) {
  auto triples = expand_prompt_set(set, opts);
  // Orientation-free key keeps antisymmetry exact under plus/minus swap.
  auto key = [](const ExpandedTriple& t) {
    return std::minmax(t.plus, t.minus);
  };
  std::sort(triples.begin(), triples.end(),
            [&](const ExpandedTriple& a, const ExpandedTriple& b) { return key(a) < key(b); });

  std::vector<std::vector<double>> diffs;
  diffs.reserve(triples.size());
  for (const auto& t : triples) {
    const auto plus = encode_in_budget(encoder, t.plus);
    const auto minus = encode_in_budget(encoder, t.minus);
    auto d = span_mean(plus, locate_subject(plus, t.subject));
    kernels::axpy(-1.0, span_mean(minus, locate_subject(minus, t.subject)), d);
    diffs.push_back(std::move(d));
  }
  if (diffs.empty()) throw Error(ErrorCode::NoValidPairs, "prompt set expands to no pairs");

  auto sum = pairwise_sum(diffs);
  const double n = static_cast<double>(diffs.size());

  ExtractionResult result;
  result.pair_count = diffs.size();
  result.warnings = causal_order_warnings(set);
  AttributeDelta& delta = result.delta;
  delta.attribute_name = set.attribute_name;
  delta.vector.resize(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) delta.vector[i] = static_cast<float>(sum[i] / n);
  delta.encoder_id = encoder.id();
  delta.method = DeltaMethod::ClipDiff;
  delta.training_nouns = set.subject_nouns;
  delta.config_digest = json_digest({{"method", "clip_diff"},
                                     {"encoder_id", encoder.id()},
                                     {"fix_articles", opts.fix_articles},
                                     {"prompt_set", prompt_set_to_json(set)}});
  delta.created_at = utc_timestamp_now();
  return result;
}

}  // namespace adelta
