#include "adelta/model.hpp"

#include <cmath>

#include "adelta/kernels.hpp"
#include "adelta/random.hpp"

namespace adelta {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma,
                             std::vector<double> weight)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)), weight_(std::move(weight)) {
  if (alpha_.size() < 2 || alpha_.size() != sigma_.size() || alpha_.size() != weight_.size())
    throw Error(ErrorCode::InvalidArgument, "schedule tables must cover t = 0..T with T >= 1");
  for (std::size_t t = 0; t < alpha_.size(); ++t) {
    if (alpha_[t] < 0.0 || alpha_[t] > 1.0 || sigma_[t] < 0.0)
      throw Error(ErrorCode::InvalidArgument, "alpha_t must lie in [0,1] and sigma_t >= 0");
    if (weight_[t] <= 0.0) throw Error(ErrorCode::InvalidArgument, "loss weights must be positive");
    if (t > 0 && (alpha_[t] > alpha_[t - 1] || sigma_[t] < sigma_[t - 1]))
      throw Error(ErrorCode::InvalidArgument,
                  "alpha_t must be non-increasing and sigma_t non-decreasing");
  }
}

NoiseSchedule NoiseSchedule::variance_preserving(int num_train_steps, double beta_start,
                                                 double beta_end) {
  if (num_train_steps < 1) throw Error(ErrorCode::InvalidArgument, "T must be positive");
  const auto n = static_cast<std::size_t>(num_train_steps);
  std::vector<double> alpha(n + 1), sigma(n + 1), weight(n + 1, 1.0);
  alpha[0] = 1.0;
  sigma[0] = 0.0;
  double alpha_bar = 1.0;
  for (std::size_t t = 1; t <= n; ++t) {
    const double frac = n == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(n - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    alpha_bar *= 1.0 - beta;
    alpha[t] = std::sqrt(alpha_bar);
    sigma[t] = std::sqrt(1.0 - alpha_bar);
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma), std::move(weight));
}

void NoiseSchedule::check(int t) const {
  if (t < 0 || t > num_train_steps())
    throw Error(ErrorCode::TimestepOutOfRange,
                "t=" + std::to_string(t) + " outside [0, " + std::to_string(num_train_steps()) + "]");
}

double NoiseSchedule::alpha(int t) const {
  check(t);
  return alpha_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::sigma(int t) const {
  check(t);
  return sigma_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::loss_weight(int t) const {
  check(t);
  return weight_[static_cast<std::size_t>(t)];
}

NoiseSchedule NoiseSchedule::with_loss_weight(std::function<double(int)> w) const {
  std::vector<double> weight(alpha_.size());
  for (std::size_t t = 0; t < weight.size(); ++t) weight[t] = w(static_cast<int>(t));
  return NoiseSchedule(alpha_, sigma_, std::move(weight));
}

Sample add_noise(const Backbone& backbone, const Sample& x0, const Sample& eps, int t) {
  const auto shape = backbone.image_shape();
  if (x0.shape != shape || eps.shape != shape)
    throw Error(ErrorCode::ShapeMismatch, "x0 and eps must match the backbone image shape");
  const auto& sched = backbone.schedule();
  if (t <= 0 || t > sched.num_train_steps())
    throw Error(ErrorCode::TimestepOutOfRange, "t must lie in (0, T]");
  Sample out(shape);
  kernels::axpby(sched.alpha(t), x0.values, sched.sigma(t), eps.values, out.values);
  return out;
}

Sample merge_guidance(const Sample& unconditional, const Sample& conditional, double weight) {
  require_same_shape(unconditional, conditional);
  if (weight == 1.0) return conditional;
  Sample out(conditional.shape);
  kernels::active().guidance_merge(unconditional.values.data(), conditional.values.data(), weight,
                                   out.values.data(), out.values.size());
  return out;
}

Sample gaussian_sample(ImageShape shape, std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(seed, stream);
  Sample s(shape);
  for (auto& v : s.values) v = rng.normal();
  return s;
}

std::vector<int> sampling_timesteps(int num_train_steps, int steps) {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (steps > num_train_steps)
    throw Error(ErrorCode::InvalidArgument, "steps exceed the number of training timesteps");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s)
    ts[static_cast<std::size_t>(s)] =
        num_train_steps - static_cast<int>((static_cast<long long>(s) * num_train_steps) / steps);
  return ts;
}

SampleResult sample(const Backbone& backbone, const EmbeddingProvider& conditional,
                    const Conditioning& unconditional, const SamplerSettings& settings) {
  const auto& sched = backbone.schedule();
  const auto ts = sampling_timesteps(sched.num_train_steps(), settings.steps);
  SampleResult result;
  Sample x = gaussian_sample(backbone.image_shape(), settings.seed, /*stream=*/0);
  Sample eps_hat(x.shape);
  for (int s = 0; s < settings.steps; ++s) {
    const int t = ts[static_cast<std::size_t>(s)];
    const int t_prev = s + 1 < settings.steps ? ts[static_cast<std::size_t>(s) + 1] : 0;
    if (settings.record_trajectory) result.trajectory.push_back({s, t, x});

    const Sample x0_c = backbone.predict_x0(x, conditional(s), t);
    const Sample x0_u = backbone.predict_x0(x, unconditional, t);
    Sample x0 = merge_guidance(x0_u, x0_c, settings.guidance_weight);

    if (t_prev == 0) {
      result.x0 = std::move(x0);
      return result;
    }
    const double a = sched.alpha(t);
    const double sg = sched.sigma(t);
    if (sg > 0.0) {
      kernels::axpby(1.0 / sg, x.values, -a / sg, x0.values, eps_hat.values);
    } else {
      std::fill(eps_hat.values.begin(), eps_hat.values.end(), 0.0);
    }
    kernels::axpby(sched.alpha(t_prev), x0.values, sched.sigma(t_prev), eps_hat.values, x.values);
  }
  result.x0 = std::move(x);
  return result;
}

Sample InstrumentedBackbone::predict_x0(const Sample& x_t, const Conditioning& cond, int t) const {
  evaluations_.fetch_add(1);
  if (record_) {
    std::lock_guard lock(mutex_);
    inputs_.push_back(cond);
  }
  return inner_->predict_x0(x_t, cond, t);
}

std::vector<Conditioning> InstrumentedBackbone::recorded_inputs() const {
  std::lock_guard lock(mutex_);
  return inputs_;
}

void InstrumentedBackbone::reset() {
  std::lock_guard lock(mutex_);
  inputs_.clear();
  evaluations_.store(0);
}

std::vector<double> content_mean(const Conditioning& cond) {
  const Matrix& e = cond.embedding;
  std::vector<double> mean(e.cols(), 0.0);
  std::size_t n = 0;
  for (std::size_t r = 0; r < e.rows(); ++r) {
    if (r < cond.special.size() && cond.special[r]) continue;
    kernels::axpy(1.0, e.row(r), mean);
    ++n;
  }
  if (n > 0) kernels::scale(1.0 / static_cast<double>(n), mean);
  return mean;
}

}  // namespace adelta
