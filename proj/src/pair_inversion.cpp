#include "adelta/pair_inversion.hpp"

#include "adelta/kernels.hpp"
#include "adelta/random.hpp"

namespace adelta {

void PairInversionConfig::validate() const {
  if (steps < 1 || batch_size < 1)
    throw Error(ErrorCode::InvalidArgument, "steps and batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "lr must be > 0");
}

nlohmann::json PairInversionConfig::to_json() const {
  return {{"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", optimizer.learning_rate},
          {"betas", {optimizer.beta1, optimizer.beta2}},
          {"weight_decay", optimizer.weight_decay},
          {"adam_eps", optimizer.eps},
          {"seed", seed}};
}

nlohmann::json PairInversionDelta::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < matrix.rows(); ++r)
    rows.push_back(std::vector<double>(matrix.row(r).begin(), matrix.row(r).end()));
  return {{"kind", "pair_inversion_delta"},
          {"source_prompt", source_prompt},
          {"encoder_id", encoder_id},
          {"optimized_mask", optimized_mask},
          {"train_config_digest", train_config_digest},
          {"rows", rows}};
}

PairInversionDelta PairInversionDelta::from_json(const nlohmann::json& doc) {
  PairInversionDelta d;
  d.source_prompt = doc.at("source_prompt").get<std::string>();
  d.encoder_id = doc.at("encoder_id").get<std::string>();
  d.optimized_mask = doc.at("optimized_mask").get<std::vector<std::uint8_t>>();
  d.train_config_digest = doc.at("train_config_digest").get<std::string>();
  const auto& rows = doc.at("rows");
  const std::size_t n = rows.size();
  const std::size_t dim = n ? rows[0].size() : 0;
  d.matrix = Matrix(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto v = rows[r].get<std::vector<double>>();
    if (v.size() != dim) throw Error(ErrorCode::ShapeMismatch, "ragged delta rows");
    std::copy(v.begin(), v.end(), d.matrix.row(r).begin());
  }
  return d;
}

namespace {

Conditioning with_delta(const Conditioning& base, const Matrix& delta) {
  Conditioning c = base;
  kernels::axpy(1.0, delta.data(), c.embedding.data());
  return c;
}

}  // namespace

double reconstruction_loss(const Backbone& backbone, const Conditioning& cond, const Sample& image,
                           std::uint64_t seed, int draws) {
  const auto& sched = backbone.schedule();
  double total = 0.0;
  for (int k = 0; k < draws; ++k) {
    CounterRng rng(seed, 0x10000u + static_cast<std::uint64_t>(k));
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.num_train_steps())));
    const Sample eps = gaussian_sample(image.shape, seed, 0x20000u + static_cast<std::uint64_t>(k));
    const Sample x_t = add_noise(backbone, image, eps, t);
    const Sample pred = backbone.predict_x0(x_t, cond, t);
    total += sched.loss_weight(t) * kernels::sum_sq_diff(image.values, pred.values);
  }
  return total / draws;
}

PairInversionResult learn_pair_delta(const Backbone& backbone, const TextEncoder& encoder,
                                     const Sample& image, const std::string& caption,
                                     const PairInversionConfig& cfg) {
  cfg.validate();
  if (image.shape != backbone.image_shape())
    throw Error(ErrorCode::ShapeMismatch, "target image does not match the backbone sample space");
  const TokenizedPrompt tp = encoder.encode(caption);
  if (tp.embeddings.cols() != backbone.embedding_dim())
    throw Error(ErrorCode::DimensionMismatch, "encoder and backbone widths differ");
  const Conditioning base = Conditioning::from(tp);
  const auto& sched = backbone.schedule();

  PairInversionResult result;
  PairInversionDelta& out = result.delta;
  out.source_prompt = caption;
  out.encoder_id = encoder.id();
  out.optimized_mask.resize(tp.size());
  for (std::size_t r = 0; r < tp.size(); ++r) out.optimized_mask[r] = tp.tokens[r].special ? 0 : 1;
  out.matrix = Matrix(tp.size(), tp.embeddings.cols());
  out.train_config_digest = json_digest({{"method", "pair_inversion"},
                                         {"backbone_id", backbone.id()},
                                         {"encoder_id", encoder.id()},
                                         {"caption", caption},
                                         {"config", cfg.to_json()}});

  AdamW optimizer(out.matrix.data().size(), cfg.optimizer);
  Matrix grad(tp.size(), tp.embeddings.cols());
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
    const Conditioning cond = with_delta(base, out.matrix);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto draw = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(cfg.batch_size) +
                        static_cast<std::uint64_t>(b);
      CounterRng rng(cfg.seed, draw);
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.num_train_steps())));
      const Sample eps = gaussian_sample(image.shape, cfg.seed ^ 0xe95u, draw);
      const Sample x_t = add_noise(backbone, image, eps, t);
      const Sample pred = backbone.predict_x0(x_t, cond, t);
      const double w = sched.loss_weight(t);
      loss += w * kernels::sum_sq_diff(image.values, pred.values);
      std::vector<double> cot(pred.values.size());
      for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = -2.0 * w * (image.values[i] - pred.values[i]);
      const Matrix g = backbone.embedding_vjp(x_t, cond, t, cot);
      kernels::axpy(1.0, g.data(), grad.data());
    }
    kernels::scale(1.0 / cfg.batch_size, grad.data());
    result.losses.push_back(loss / cfg.batch_size);
    // Special rows get no gradient and no decay: they stay exactly zero.
    for (std::size_t r = 0; r < grad.rows(); ++r)
      if (!out.optimized_mask[r]) std::fill(grad.row(r).begin(), grad.row(r).end(), 0.0);
    optimizer.step(out.matrix.data(), grad.data());
  }
  return result;
}

PairInversionDelta mask_to_subject(const PairInversionDelta& delta, const SubjectSpan& span) {
  if (span.end > delta.matrix.rows() || span.start >= span.end)
    throw Error(ErrorCode::SpanOutOfRange, "span outside the delta's token range");
  PairInversionDelta out = delta;
  for (std::size_t r = 0; r < out.matrix.rows(); ++r) {
    if (r >= span.start && r < span.end) continue;
    std::fill(out.matrix.row(r).begin(), out.matrix.row(r).end(), 0.0);
  }
  return out;
}

Matrix interpolate_application(const TokenizedPrompt& tp, const PairInversionDelta& delta, double s) {
  if (tp.embeddings.rows() != delta.matrix.rows() || tp.embeddings.cols() != delta.matrix.cols())
    throw Error(ErrorCode::DimensionMismatch, "delta shape does not match the prompt embedding");
  if (!delta.encoder_id.empty() && tp.encoder_id != delta.encoder_id)
    throw Error(ErrorCode::DimensionMismatch, "delta was learned with encoder " + delta.encoder_id);
  Matrix out = tp.embeddings;
  if (s == 0.0) return out;
  kernels::axpy(s, delta.matrix.data(), out.data());
  return out;
}

AttributeDelta subject_row_to_attribute_delta(const PairInversionDelta& delta,
                                              const SubjectSpan& span, const std::string& name) {
  if (span.end > delta.matrix.rows() || span.start >= span.end)
    throw Error(ErrorCode::SpanOutOfRange, "span outside the delta's token range");
  std::vector<double> mean(delta.matrix.cols(), 0.0);
  for (std::size_t r = span.start; r < span.end; ++r) kernels::axpy(1.0, delta.matrix.row(r), mean);
  AttributeDelta out;
  out.attribute_name = name;
  out.vector.resize(mean.size());
  const double n = static_cast<double>(span.length());
  for (std::size_t i = 0; i < mean.size(); ++i)
    out.vector[i] = static_cast<float>(span.length() == 1 ? mean[i] : mean[i] / n);
  out.encoder_id = delta.encoder_id;
  out.method = DeltaMethod::PairInversionMasked;
  out.training_nouns = {span.word};
  out.config_digest = delta.train_config_digest;
  out.created_at = utc_timestamp_now();
  return out;
}

}  // namespace adelta
