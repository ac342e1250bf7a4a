#pragma once

// Full tokenwise deltas learned from one image/caption pair by
// backpropagating the denoising reconstruction loss into the embedding,
// with post-hoc masking to a subject and linear interpolation.

#include <cstdint>
#include <string>
#include <vector>

#include "adelta/delta.hpp"
#include "adelta/model.hpp"
#include "adelta/trainer.hpp"

namespace adelta {

struct PairInversionConfig {
  int steps = 75;
  int batch_size = 1;
  AdamWParams optimizer{};
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct PairInversionDelta {
  Matrix matrix;  // N x d; rows outside optimized_mask are zero
  std::string source_prompt;
  std::string encoder_id;
  std::vector<std::uint8_t> optimized_mask;
  std::string train_config_digest;

  nlohmann::json to_json() const;
  static PairInversionDelta from_json(const nlohmann::json& doc);
};

struct PairInversionResult {
  PairInversionDelta delta;
  std::vector<double> losses;  // reconstruction loss before each update
};

// Eq.-style reconstruction objective: noise level and eps are redrawn each
// step from a counter-based generator keyed by (seed, step). BOS/EOS rows are
// never updated.
PairInversionResult learn_pair_delta(const Backbone& backbone, const TextEncoder& encoder,
                                     const Sample& image, const std::string& caption,
                                     const PairInversionConfig& cfg);

// Expected reconstruction loss of `image` under embedding e + delta,
// averaged over `draws` (t, eps) samples.
double reconstruction_loss(const Backbone& backbone, const Conditioning& cond, const Sample& image,
                           std::uint64_t seed, int draws);

PairInversionDelta mask_to_subject(const PairInversionDelta& delta, const SubjectSpan& span);

// e + s * delta rowwise; s == 0 returns e unchanged.
Matrix interpolate_application(const TokenizedPrompt& tp, const PairInversionDelta& delta, double s);

AttributeDelta subject_row_to_attribute_delta(const PairInversionDelta& delta,
                                              const SubjectSpan& span, const std::string& name);

}  // namespace adelta
