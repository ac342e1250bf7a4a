#pragma once

// Pluggable text-encoder and diffusion-backbone interfaces, the noise
// schedule, and the deterministic sampler shared by every module.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adelta/prompt.hpp"
#include "adelta/tensor.hpp"

namespace adelta {

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual const std::string& id() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::size_t max_tokens() const = 0;

  // Throws EmptyPrompt or PromptTooLong.
  virtual TokenizedPrompt encode(std::string_view prompt) const = 0;
  // Embedding of the empty prompt, used for the unconditional guidance branch.
  virtual TokenizedPrompt encode_unconditional() const = 0;
};

// Signal/noise coefficients on the integer grid t = 0..T. t = 0 is the clean
// endpoint (alpha 1, sigma 0).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  // alpha, sigma and weight are indexed by t in [0, T]. Throws InvalidArgument
  // when alpha is increasing, sigma decreasing, or a weight is non-positive.
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma, std::vector<double> weight);

  // DDPM linear-beta variance-preserving schedule.
  static NoiseSchedule variance_preserving(int num_train_steps = 1000, double beta_start = 1e-4,
                                           double beta_end = 0.02);

  int num_train_steps() const noexcept { return static_cast<int>(alpha_.size()) - 1; }
  double alpha(int t) const;
  double sigma(int t) const;
  double loss_weight(int t) const;
  NoiseSchedule with_loss_weight(std::function<double(int)> w) const;

 private:
  void check(int t) const;

  std::vector<double> alpha_{1.0};
  std::vector<double> sigma_{0.0};
  std::vector<double> weight_{1.0};
};

// Embedding handed to the backbone, with the special-token mask needed to
// tell BOS/EOS rows apart from content rows.
struct Conditioning {
  Matrix embedding;
  std::vector<std::uint8_t> special;

  static Conditioning from(const TokenizedPrompt& tp) { return {tp.embeddings, tp.special_mask()}; }
  bool operator==(const Conditioning&) const = default;
};

class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const std::string& id() const = 0;
  virtual ImageShape image_shape() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::vector<std::string> supported_encoders() const = 0;

  // Clean-sample prediction x0_hat(x_t | e, t). Throws DimensionMismatch or
  // TimestepOutOfRange.
  virtual Sample predict_x0(const Sample& x_t, const Conditioning& cond, int t) const = 0;

  // Vector-Jacobian product of predict_x0 with respect to the embedding:
  // returns d<cotangent, x0_hat>/d embedding, shaped like cond.embedding.
  virtual Matrix embedding_vjp(const Sample& x_t, const Conditioning& cond, int t,
                               std::span<const double> cotangent) const = 0;
};

// alpha_t * x0 + sigma_t * eps
Sample add_noise(const Backbone& backbone, const Sample& x0, const Sample& eps, int t);

// u + w * (c - u); returns c unchanged when w == 1.
Sample merge_guidance(const Sample& unconditional, const Sample& conditional, double weight);

// Standard-normal sample in the backbone's space, keyed by (seed, stream).
Sample gaussian_sample(ImageShape shape, std::uint64_t seed, std::uint64_t stream);

struct SamplerSettings {
  std::uint64_t seed = 0;
  int steps = 50;
  double guidance_weight = 7.5;
  bool record_trajectory = false;
};

struct TrajectoryState {
  int step = 0;  // 0-based sampler step about to be taken
  int t = 0;     // timestep of x_t
  Sample x_t;
};

struct SampleResult {
  Sample x0;
  std::vector<TrajectoryState> trajectory;
};

// Conditioning for a given 0-based sampler step.
using EmbeddingProvider = std::function<const Conditioning&(int step)>;

// Descending timesteps visited by a `steps`-step sampler over [1, T].
std::vector<int> sampling_timesteps(int num_train_steps, int steps);

// Deterministic DDIM-style (eta = 0) sampler in x0-parameterisation with
// classifier-free guidance. Each step evaluates the backbone exactly twice
// (conditional and unconditional).
SampleResult sample(const Backbone& backbone, const EmbeddingProvider& conditional,
                    const Conditioning& unconditional, const SamplerSettings& settings);

// Backbone decorator that counts evaluations and optionally records every
// conditioning input it receives.
class InstrumentedBackbone : public Backbone {
 public:
  explicit InstrumentedBackbone(std::shared_ptr<const Backbone> inner, bool record_inputs = false)
      : inner_(std::move(inner)), record_(record_inputs) {}

  const std::string& id() const override { return inner_->id(); }
  ImageShape image_shape() const override { return inner_->image_shape(); }
  const NoiseSchedule& schedule() const override { return inner_->schedule(); }
  std::size_t embedding_dim() const override { return inner_->embedding_dim(); }
  std::vector<std::string> supported_encoders() const override {
    return inner_->supported_encoders();
  }
  Sample predict_x0(const Sample& x_t, const Conditioning& cond, int t) const override;
  Matrix embedding_vjp(const Sample& x_t, const Conditioning& cond, int t,
                       std::span<const double> cotangent) const override {
    return inner_->embedding_vjp(x_t, cond, t, cotangent);
  }

  std::uint64_t evaluations() const noexcept { return evaluations_.load(); }
  std::vector<Conditioning> recorded_inputs() const;
  void reset();

 private:
  std::shared_ptr<const Backbone> inner_;
  bool record_;
  mutable std::atomic<std::uint64_t> evaluations_{0};
  mutable std::mutex mutex_;
  mutable std::vector<Conditioning> inputs_;
};

// Row mean over non-special rows; zero vector when there are none.
std::vector<double> content_mean(const Conditioning& cond);

}  // namespace adelta
