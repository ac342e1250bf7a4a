#pragma once

// Generation-time application of attribute deltas: span-targeted addition,
// order-free composition, delayed application and scale sweeps.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adelta/delta.hpp"
#include "adelta/model.hpp"
#include "adelta/prompt.hpp"

namespace adelta {

struct DeltaApplication {
  std::shared_ptr<const AttributeDelta> delta;
  std::string subject_word;
  Occurrence occurrence = Occurrence::first();
  double scale = 0.0;
  int delay_steps = 0;

  nlohmann::json to_json() const;
};

struct GenerationConfig {
  std::string prompt;
  std::uint64_t seed = 0;
  int steps = 50;
  double guidance_weight = 7.5;
  std::vector<DeltaApplication> applications;

  // Throws InvalidArgument / DelayExceedsSteps / EncoderMismatch.
  void validate(const TextEncoder& encoder) const;
  nlohmann::json to_json() const;
};

// Adds scale * delta to every row of each application's resolved span(s).
// Applications are canonicalised first: identical (delta, span) pairs are
// merged by summing their scales and the rest are applied in a fixed order,
// so the result is independent of the order of `applications`. Rows outside
// every span, and zero-scale applications, leave the input bit-identical.
Matrix apply_deltas(const TokenizedPrompt& tp, const std::vector<DeltaApplication>& applications);

// Per-step (baseline, modified) conditioning pair, for external attention
// controllers.
using StepEmbeddingHook =
    std::function<void(int step, const Conditioning& baseline, const Conditioning& modified)>;

struct GenerationResult {
  Sample image;
  nlohmann::json provenance;
  std::vector<std::string> warnings;
};

// Runs the sampler; at 0-based step s the conditional embedding carries
// exactly the applications with delay_steps <= s. The unconditional branch
// is never edited. Backbone evaluations equal those of the baseline.
GenerationResult generate_with_deltas(const Backbone& backbone, const TextEncoder& encoder,
                                      const GenerationConfig& cfg,
                                      const StepEmbeddingHook& hook = {});

struct SweepAxis {
  DeltaApplication application;  // scale is overwritten per cell
  std::vector<double> scales;
};

// n evenly spaced points from lo to hi inclusive.
std::vector<double> linear_scales(double lo, double hi, int n);

struct GridCell {
  std::vector<double> scales;  // one per axis
  std::size_t row = 0;
  std::size_t col = 0;
  bool unmodified = false;  // all scales zero
  GenerationResult result;
};

struct SweepGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<GridCell> cells;  // row-major, axis1 = rows, axis2 = cols
};

SweepGrid sweep_grid(const Backbone& backbone, const TextEncoder& encoder, const GenerationConfig& base,
                     const SweepAxis& axis1, const std::optional<SweepAxis>& axis2 = std::nullopt);

}  // namespace adelta
