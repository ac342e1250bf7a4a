#include "adelta/trainer.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "adelta/kernels.hpp"
#include "adelta/prompt_set_io.hpp"

namespace adelta {

std::string_view to_string(AnchorMode m) {
  return m == AnchorMode::NoiseInjection ? "noise-injection" : "trajectory-truncation";
}

AnchorMode parse_anchor_mode(std::string_view s) {
  if (s == "noise-injection") return AnchorMode::NoiseInjection;
  if (s == "trajectory-truncation") return AnchorMode::TrajectoryTruncation;
  throw Error(ErrorCode::InvalidArgument, "unknown anchor mode '" + std::string(s) + "'");
}

void AdamW::step(std::span<double> param, std::span<const double> grad) {
  if (param.size() != m_.size() || grad.size() != m_.size())
    throw Error(ErrorCode::DimensionMismatch, "optimizer state size mismatch");
  ++t_;
  const double bias1 = 1.0 - std::pow(params_.beta1, t_);
  const double bias2 = 1.0 - std::pow(params_.beta2, t_);
  kernels::active().adamw_step(param.data(), m_.data(), v_.data(), grad.data(), param.size(),
                               params_.learning_rate, params_.beta1, params_.beta2, params_.eps,
                               params_.weight_decay, bias1, bias2);
}

AlphaSampler::AlphaSampler(double lo, double hi, double excl_lo, double excl_hi)
    : lo_(lo), hi_(hi), excl_lo_(excl_lo), excl_hi_(excl_hi) {
  if (!(lo < excl_lo && excl_lo <= excl_hi && excl_hi < hi))
    throw Error(ErrorCode::InvalidArgument, "alpha exclusion must lie strictly inside alpha range");
}

double AlphaSampler::draw(CounterRng& rng) const {
  for (;;) {
    // Closed upper end: u in [0,1) maps to [lo, hi); hi itself has measure zero.
    const double a = rng.uniform(lo_, hi_);
    if (a > excl_lo_ && a < excl_hi_) continue;
    return a;
  }
}

void DeltaTrainConfig::validate() const {
  if (steps < 1 || batch_size < 1 || alphas_per_item < 1)
    throw Error(ErrorCode::InvalidArgument, "steps, batch_size and alphas_per_item must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "lr must be > 0");
  if (anchors_per_triple < 0) throw Error(ErrorCode::InvalidArgument, "anchors_per_triple must be >= 0");
  if (!(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 > 0.0 &&
        optimizer.beta2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "betas must lie in (0, 1)");
  if (optimizer.weight_decay < 0.0) throw Error(ErrorCode::InvalidArgument, "weight decay < 0");
  if (anchor_steps < 1) throw Error(ErrorCode::InvalidArgument, "anchor_steps must be >= 1");
  alpha_sampler();
}

AlphaSampler DeltaTrainConfig::alpha_sampler() const {
  return AlphaSampler(alpha_min, alpha_max, alpha_exclusion_lo, alpha_exclusion_hi);
}

nlohmann::json DeltaTrainConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", optimizer.learning_rate},
          {"betas", {optimizer.beta1, optimizer.beta2}},
          {"weight_decay", optimizer.weight_decay},
          {"adam_eps", optimizer.eps},
          {"alpha_range", {alpha_min, alpha_max}},
          {"alpha_exclusion", {alpha_exclusion_lo, alpha_exclusion_hi}},
          {"alphas_per_item", alphas_per_item},
          {"seed", seed},
          {"anchor_mode", std::string(to_string(anchor_mode))},
          {"anchor_steps", anchor_steps},
          {"anchor_guidance", anchor_guidance},
          {"anchors_per_triple", anchors_per_triple}};
}

TrainingAnchor make_anchor(const Backbone& backbone, const TextEncoder& encoder,
                           const ExpandedTriple& triple, std::uint64_t seed,
                           const AnchorOptions& opts) {
  const auto neutral = encoder.encode(triple.neutral);
  const auto plus = encoder.encode(triple.plus);
  const auto minus = encoder.encode(triple.minus);

  TrainingAnchor a;
  a.neutral_prompt = triple.neutral;
  a.plus_prompt = triple.plus;
  a.minus_prompt = triple.minus;
  a.neutral_span = locate_subject(neutral, triple.subject);
  a.plus_span = locate_subject(plus, triple.subject);
  a.minus_span = locate_subject(minus, triple.subject);
  a.seed = seed;
  a.mode = opts.mode;

  const auto cond = Conditioning::from(neutral);
  const auto uncond = Conditioning::from(encoder.encode_unconditional());
  SamplerSettings settings{seed, opts.steps, opts.guidance,
                           opts.mode == AnchorMode::TrajectoryTruncation};
  auto result = sample(backbone, [&](int) -> const Conditioning& { return cond; }, uncond, settings);
  a.x0_anchor = std::move(result.x0);

  CounterRng rng(seed, /*stream=*/2);
  if (opts.mode == AnchorMode::NoiseInjection) {
    const int T = backbone.schedule().num_train_steps();
    a.t = opts.fixed_timestep ? *opts.fixed_timestep : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    a.eps = gaussian_sample(backbone.image_shape(), seed, /*stream=*/3);
    a.x_t_anchor = add_noise(backbone, a.x0_anchor, *a.eps, a.t);
  } else {
    const auto n = result.trajectory.size();
    std::size_t s = opts.fixed_step ? static_cast<std::size_t>(*opts.fixed_step) : rng.below(n);
    if (s >= n) throw Error(ErrorCode::InvalidArgument, "truncation step beyond trajectory");
    a.t = result.trajectory[s].t;
    a.x_t_anchor = std::move(result.trajectory[s].x_t);
  }
  return a;
}

Sample compute_target(const Sample& x0_a_hat, const Sample& x0_plus_hat, const Sample& x0_minus_hat,
                      double alpha) {
  require_same_shape(x0_a_hat, x0_plus_hat);
  require_same_shape(x0_a_hat, x0_minus_hat);
  Sample out = x0_a_hat;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = x0_a_hat.values[i] + alpha * (x0_plus_hat.values[i] - x0_minus_hat.values[i]);
  return out;
}

AnchorPredictions predict_anchor(const Backbone& backbone, const TrainingAnchor& anchor,
                                 const Conditioning& neutral, const Conditioning& plus,
                                 const Conditioning& minus) {
  return {backbone.predict_x0(anchor.x_t_anchor, neutral, anchor.t),
          backbone.predict_x0(anchor.x_t_anchor, plus, anchor.t),
          backbone.predict_x0(anchor.x_t_anchor, minus, anchor.t)};
}

Conditioning edit_span(const Conditioning& base, const SubjectSpan& span,
                       std::span<const double> delta, double alpha) {
  if (span.end > base.embedding.rows() || span.start >= span.end)
    throw Error(ErrorCode::SpanOutOfRange, "span outside embedding");
  if (delta.size() != base.embedding.cols())
    throw Error(ErrorCode::DimensionMismatch, "delta width does not match embedding width");
  Conditioning out = base;
  if (alpha == 0.0) return out;
  for (std::size_t r = span.start; r < span.end; ++r) kernels::axpy(alpha, delta, out.embedding.row(r));
  return out;
}

DeltaLoss delta_loss(const Backbone& backbone, const TrainingAnchor& anchor,
                     const AnchorPredictions& predictions, const Conditioning& neutral,
                     const SubjectSpan& span, std::span<const double> delta, double alpha,
                     bool with_grad) {
  if (delta.size() != backbone.embedding_dim())
    throw Error(ErrorCode::DimensionMismatch, "delta width does not match the backbone");
  const double w = backbone.schedule().loss_weight(anchor.t);
  const Sample target = compute_target(predictions.anchor, predictions.plus, predictions.minus, alpha);
  const Conditioning edited = edit_span(neutral, span, delta, alpha);
  const Sample pred = backbone.predict_x0(anchor.x_t_anchor, edited, anchor.t);

  DeltaLoss out;
  out.loss = w * kernels::sum_sq_diff(target.values, pred.values);
  if (!with_grad) return out;

  std::vector<double> cot(pred.values.size());
  for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = -2.0 * w * (target.values[i] - pred.values[i]);
  const Matrix g = backbone.embedding_vjp(anchor.x_t_anchor, edited, anchor.t, cot);
  out.grad.assign(delta.size(), 0.0);
  for (std::size_t r = span.start; r < span.end; ++r) kernels::axpy(alpha, g.row(r), out.grad);
  return out;
}

std::string TrainLogRecord::to_json_line() const {
  return nlohmann::json{{"step", step}, {"loss_mean", loss_mean}, {"delta_norm", delta_norm}}.dump();
}

namespace {

struct EncodedTriple {
  Conditioning neutral;
  Conditioning plus;
  Conditioning minus;
};

struct AnchorEntry {
  TrainingAnchor anchor;
  AnchorPredictions predictions;
};

}  // namespace

TrainResult train_attribute_delta(const Backbone& backbone, const TextEncoder& encoder,
                                  const ContrastivePromptSet& set, const DeltaTrainConfig& cfg,
                                  const TrainLogSink& sink) {
  cfg.validate();
  if (encoder.embedding_dim() != backbone.embedding_dim())
    throw Error(ErrorCode::DimensionMismatch, "encoder and backbone widths differ");
  const auto triples = expand_prompt_set(set);
  if (triples.empty()) throw Error(ErrorCode::NoValidPairs, "prompt set expands to no triples");

  const std::size_t d = backbone.embedding_dim();
  std::vector<double> delta(d, 0.0);
  AdamW optimizer(d, cfg.optimizer);
  const AlphaSampler alphas = cfg.alpha_sampler();
  CounterRng rng(cfg.seed, /*stream=*/0xde17a);

  AnchorOptions anchor_opts;
  anchor_opts.mode = cfg.anchor_mode;
  anchor_opts.steps = cfg.anchor_steps;
  anchor_opts.guidance = cfg.anchor_guidance;

  std::map<std::size_t, EncodedTriple> encoded;
  std::map<std::pair<std::size_t, std::uint64_t>, AnchorEntry> anchors;

  TrainResult result;
  std::vector<double> grad(d);
  const double terms = static_cast<double>(cfg.batch_size) * static_cast<double>(cfg.alphas_per_item);
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = rng.below(triples.size());
      const std::uint64_t anchor_seed =
          cfg.anchors_per_triple > 0
              ? splitmix64(cfg.seed ^ splitmix64(idx)) + rng.below(static_cast<std::uint64_t>(cfg.anchors_per_triple))
              : rng.next_u64();
      auto enc_it = encoded.find(idx);
      if (enc_it == encoded.end()) {
        const auto& tr = triples[idx];
        enc_it = encoded
                     .emplace(idx, EncodedTriple{Conditioning::from(encoder.encode(tr.neutral)),
                                                 Conditioning::from(encoder.encode(tr.plus)),
                                                 Conditioning::from(encoder.encode(tr.minus))})
                     .first;
      }
      const auto& enc = enc_it->second;
      auto build = [&] {
        auto anchor = make_anchor(backbone, encoder, triples[idx], anchor_seed, anchor_opts);
        auto preds = predict_anchor(backbone, anchor, enc.neutral, enc.plus, enc.minus);
        return AnchorEntry{std::move(anchor), std::move(preds)};
      };
      std::optional<AnchorEntry> fresh;
      const AnchorEntry* entry = nullptr;
      if (cfg.anchors_per_triple > 0) {
        auto it = anchors.find({idx, anchor_seed});
        if (it == anchors.end()) it = anchors.emplace(std::make_pair(idx, anchor_seed), build()).first;
        entry = &it->second;
      } else {
        entry = &fresh.emplace(build());
      }
      const auto& anchor = entry->anchor;
      const auto& preds = entry->predictions;
      for (int k = 0; k < cfg.alphas_per_item; ++k) {
        const double alpha = alphas.draw(rng);
        const auto term = delta_loss(backbone, anchor, preds, enc.neutral, anchor.neutral_span, delta, alpha);
        loss_sum += term.loss;
        kernels::axpy(1.0, term.grad, grad);
      }
    }
    kernels::scale(1.0 / terms, grad);
    optimizer.step(delta, grad);

    TrainLogRecord rec{step, loss_sum / terms, std::sqrt(kernels::dot(delta, delta))};
    result.log.push_back(rec);
    if (sink) sink(rec);
  }

  AttributeDelta& out = result.delta;
  out.attribute_name = set.attribute_name;
  out.vector.resize(d);
  for (std::size_t i = 0; i < d; ++i) out.vector[i] = static_cast<float>(delta[i]);
  out.encoder_id = encoder.id();
  out.method = DeltaMethod::Learned;
  out.training_nouns = set.subject_nouns;
  out.config_digest = json_digest({{"method", "learned"},
                                   {"backbone_id", backbone.id()},
                                   {"encoder_id", encoder.id()},
                                   {"train_config", cfg.to_json()},
                                   {"prompt_set", prompt_set_to_json(set)}});
  out.created_at = utc_timestamp_now();
  result.delta_f64 = std::move(delta);
  return result;
}

}  // namespace adelta
