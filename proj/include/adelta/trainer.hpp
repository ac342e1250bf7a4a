#pragma once

// Learned attribute deltas: the guidance-composed prediction difference
// x_a + alpha * (x_plus - x_minus) is distilled into a single 1 x d delta
// added (scaled by alpha) to the subject rows of the neutral prompt.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adelta/delta.hpp"
#include "adelta/model.hpp"
#include "adelta/prompt.hpp"
#include "adelta/random.hpp"

namespace adelta {

enum class AnchorMode {
  // Sample x0 fully, then noise it to a random t with fresh eps.
  NoiseInjection,
  // Stop the sampler at a random step and keep its state.
  TrajectoryTruncation,
};

std::string_view to_string(AnchorMode m);
AnchorMode parse_anchor_mode(std::string_view s);

struct AdamWParams {
  double learning_rate = 0.1;
  double beta1 = 0.5;
  double beta2 = 0.8;
  double weight_decay = 0.333;
  double eps = 1e-8;
};

class AdamW {
 public:
  AdamW(std::size_t n, AdamWParams params) : params_(params), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> param, std::span<const double> grad);
  int iterations() const noexcept { return t_; }
  const AdamWParams& params() const noexcept { return params_; }

 private:
  AdamWParams params_;
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

// Uniform over [lo, hi] minus the open interval (excl_lo, excl_hi), by
// rejection.
class AlphaSampler {
 public:
  AlphaSampler(double lo, double hi, double excl_lo, double excl_hi);
  double draw(CounterRng& rng) const;

 private:
  double lo_, hi_, excl_lo_, excl_hi_;
};

struct DeltaTrainConfig {
  int steps = 1000;
  int batch_size = 10;
  AdamWParams optimizer{};
  double alpha_min = -5.0;
  double alpha_max = 5.0;
  double alpha_exclusion_lo = -0.1;
  double alpha_exclusion_hi = 0.1;
  int alphas_per_item = 4;
  std::uint64_t seed = 0;
  AnchorMode anchor_mode = AnchorMode::NoiseInjection;
  // Settings used to sample anchor images.
  int anchor_steps = 50;
  double anchor_guidance = 7.5;
  // 0: every batch item gets a fresh anchor. n > 0: anchor seeds come from a
  // pool of n per triple and generated anchors are cached for the run.
  int anchors_per_triple = 0;

  void validate() const;
  AlphaSampler alpha_sampler() const;
  nlohmann::json to_json() const;
};

struct TrainingAnchor {
  std::string neutral_prompt;
  std::string plus_prompt;
  std::string minus_prompt;
  SubjectSpan neutral_span;
  SubjectSpan plus_span;
  SubjectSpan minus_span;
  Sample x0_anchor;
  int t = 0;
  Sample x_t_anchor;
  std::optional<Sample> eps;  // set in noise-injection mode
  std::uint64_t seed = 0;
  AnchorMode mode = AnchorMode::NoiseInjection;
};

struct AnchorOptions {
  AnchorMode mode = AnchorMode::NoiseInjection;
  int steps = 50;
  double guidance = 7.5;
  // Forces the timestep (noise injection) or the sampler step (truncation).
  std::optional<int> fixed_timestep;
  std::optional<int> fixed_step;
};

TrainingAnchor make_anchor(const Backbone& backbone, const TextEncoder& encoder,
                           const ExpandedTriple& triple, std::uint64_t seed,
                           const AnchorOptions& opts = {});

// x_a + alpha * (x_plus - x_minus)
Sample compute_target(const Sample& x0_a_hat, const Sample& x0_plus_hat, const Sample& x0_minus_hat,
                      double alpha);

struct AnchorPredictions {
  Sample anchor;
  Sample plus;
  Sample minus;
};

// Conditional ("vanilla") predictions of the three prompts from the shared
// (x_t, t) of the anchor.
AnchorPredictions predict_anchor(const Backbone& backbone, const TrainingAnchor& anchor,
                                 const Conditioning& neutral, const Conditioning& plus,
                                 const Conditioning& minus);

// Neutral embedding with alpha * delta added to every row of the span.
Conditioning edit_span(const Conditioning& base, const SubjectSpan& span,
                       std::span<const double> delta, double alpha);

struct DeltaLoss {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d delta; empty when not requested
};

// w(t) * || target(alpha) - x0_hat(x_t | e'(e, alpha * delta), t) ||^2
DeltaLoss delta_loss(const Backbone& backbone, const TrainingAnchor& anchor,
                     const AnchorPredictions& predictions, const Conditioning& neutral,
                     const SubjectSpan& span, std::span<const double> delta, double alpha,
                     bool with_grad = true);

struct TrainLogRecord {
  int step = 0;
  double loss_mean = 0.0;
  double delta_norm = 0.0;

  std::string to_json_line() const;
};

struct TrainResult {
  AttributeDelta delta;
  std::vector<double> delta_f64;  // unrounded final parameters
  std::vector<TrainLogRecord> log;
};

using TrainLogSink = std::function<void(const TrainLogRecord&)>;

// Throws NoValidPairs when the set expands to nothing.
TrainResult train_attribute_delta(const Backbone& backbone, const TextEncoder& encoder,
                                  const ContrastivePromptSet& set, const DeltaTrainConfig& cfg,
                                  const TrainLogSink& sink = {});

}  // namespace adelta
