#include "adelta/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "adelta/image.hpp"
#include "adelta/kernels.hpp"
#include "adelta/random.hpp"

namespace adelta {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "embedding widths differ");
  const double na = std::sqrt(kernels::dot(a, a));
  const double nb = std::sqrt(kernels::dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

std::vector<double> normalized(std::vector<double> v) {
  const double n = std::sqrt(kernels::dot(v, v));
  if (n > 0.0) kernels::scale(1.0 / n, v);
  return v;
}

ToyImageTextScorer::ToyImageTextScorer(std::shared_ptr<const TextEncoder> encoder, Matrix weights)
    : encoder_(std::move(encoder)), weights_(std::move(weights)) {
  if (!encoder_) throw Error(ErrorCode::AdapterUnavailable, "toy scorer needs a text encoder");
  if (weights_.cols() != encoder_->embedding_dim())
    throw Error(ErrorCode::DimensionMismatch, "scorer weights do not match the encoder width");
}

std::vector<double> ToyImageTextScorer::embed_image(const Sample& image) const {
  if (image.values.size() != weights_.rows())
    throw Error(ErrorCode::ShapeMismatch, "image does not match the scorer's sample space");
  return normalized(image.values);
}

std::vector<double> ToyImageTextScorer::embed_text(std::string_view text) const {
  const auto mean = content_mean(Conditioning::from(encoder_->encode(text)));
  std::vector<double> out(weights_.rows());
  for (std::size_t r = 0; r < weights_.rows(); ++r) out[r] = kernels::dot(weights_.row(r), mean);
  return normalized(std::move(out));
}

void FixedImageTextScorer::set_text(std::string text, std::vector<double> embedding) {
  text_[std::move(text)] = normalized(std::move(embedding));
}

void FixedImageTextScorer::set_image(double key, std::vector<double> embedding) {
  image_[key] = normalized(std::move(embedding));
}

std::vector<double> FixedImageTextScorer::embed_image(const Sample& image) const {
  if (image.values.empty()) throw Error(ErrorCode::NotFound, "empty image");
  const auto it = image_.find(image.values.front());
  if (it == image_.end()) throw Error(ErrorCode::NotFound, "no embedding registered for image");
  return it->second;
}

std::vector<double> FixedImageTextScorer::embed_text(std::string_view text) const {
  const auto it = text_.find(text);
  if (it == text_.end()) throw Error(ErrorCode::NotFound, "no embedding registered for '" + std::string(text) + "'");
  return it->second;
}

double MeanAbsPerceptualMetric::change(const Sample& a, const Sample& b) const {
  require_same_shape(a, b);
  if (a.values.empty()) return 0.0;
  if (resolution_ == 0) return kernels::sum_abs_diff(a.values, b.values) / static_cast<double>(a.values.size());
  const Sample ra = resize_bilinear(a, resolution_, resolution_);
  const Sample rb = resize_bilinear(b, resolution_, resolution_);
  return kernels::sum_abs_diff(ra.values, rb.values) / static_cast<double>(ra.values.size());
}

std::vector<double> ResizedPixelEmbedder::embed(const Sample& image) const {
  return resize_bilinear(image, resolution_, resolution_).values;
}

std::vector<double> HashingRandomEmbedder::embed(const Sample& image) const {
  std::string bytes(image.values.size() * sizeof(double), '\0');
  if (!bytes.empty()) std::memcpy(bytes.data(), image.values.data(), bytes.size());
  CounterRng rng(fnv1a64(bytes) ^ salt_, 0xe3bed);
  std::vector<double> v(dim_);
  for (auto& x : v) x = rng.normal();
  return normalized(std::move(v));
}

std::optional<std::vector<double>> NormThresholdFaceReid::embed_face(const Sample& image) const {
  const double n = std::sqrt(kernels::dot(image.values, image.values));
  if (!(n > threshold_)) return std::nullopt;
  return normalized(image.values);
}

MetricAdapters toy_metric_adapters(std::shared_ptr<const TextEncoder> encoder, const Matrix& weights) {
  MetricAdapters a;
  a.image_text_scorer = std::make_shared<ToyImageTextScorer>(std::move(encoder), weights);
  a.perceptual_metric = std::make_shared<MeanAbsPerceptualMetric>(256);
  a.global_image_embedder = std::make_shared<ResizedPixelEmbedder>(224);
  return a;
}

double clip_bi(const MetricAdapters& adapters, const Sample& image, std::string_view prompt_plus,
               std::string_view prompt_minus) {
  if (!adapters.image_text_scorer) throw Error(ErrorCode::AdapterUnavailable, "no image-text scorer configured");
  if (prompt_plus.empty() || prompt_minus.empty())
    throw Error(ErrorCode::InvalidArgument, "clip_bi needs non-empty prompts");
  const auto& s = *adapters.image_text_scorer;
  const auto img = s.embed_image(image);
  return cosine(img, s.embed_text(prompt_plus)) - cosine(img, s.embed_text(prompt_minus));
}

double delta_clip_bi(const MetricAdapters& adapters, const Sample& image, const Sample& reference,
                     std::string_view prompt_plus, std::string_view prompt_minus) {
  return clip_bi(adapters, image, prompt_plus, prompt_minus) -
         clip_bi(adapters, reference, prompt_plus, prompt_minus);
}

std::map<std::string, double> image_change(const MetricAdapters& adapters, const Sample& image,
                                           const Sample& reference) {
  if (!adapters.perceptual_metric) throw Error(ErrorCode::AdapterUnavailable, "no perceptual metric configured");
  if (!adapters.global_image_embedder)
    throw Error(ErrorCode::AdapterUnavailable, "no global image embedder configured");
  require_same_shape(image, reference);
  std::map<std::string, double> out;
  out["perceptual_change"] = adapters.perceptual_metric->change(image, reference);
  out["global_similarity"] = cosine(adapters.global_image_embedder->embed(image),
                                    adapters.global_image_embedder->embed(reference));
  return out;
}

std::optional<double> reid_similarity(const MetricAdapters& adapters, const Sample& image,
                                      const Sample& reference) {
  if (!adapters.face_reid) return std::nullopt;
  const auto a = adapters.face_reid->embed_face(image);
  const auto b = adapters.face_reid->embed_face(reference);
  if (!a || !b) return std::nullopt;
  return cosine(*a, *b);
}

std::string_view to_string(SamplingMode m) {
  return m == SamplingMode::Normal ? "normal" : "delayed";
}

std::string substitute_noun(std::string_view templ, std::string_view noun) {
  std::string out(templ);
  const std::string key = "{noun}";
  for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + noun.size()))
    out.replace(pos, key.size(), noun);
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  r.count = values.size();
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

EvalTable sweep_evaluate(const Backbone& backbone, const TextEncoder& encoder,
                         const MetricAdapters& adapters, std::shared_ptr<const AttributeDelta> delta,
                         const EvalSweepConfig& cfg) {
  if (!delta) throw Error(ErrorCode::InvalidArgument, "sweep needs a delta");
  if (cfg.nouns.empty() || cfg.scales.empty() || cfg.seeds.empty() || cfg.modes.empty())
    throw Error(ErrorCode::InvalidArgument, "sweep needs nouns, scales, seeds and modes");
  if (cfg.plus_template.empty() || cfg.minus_template.empty())
    throw Error(ErrorCode::InvalidArgument, "sweep needs plus and minus prompt templates");

  EvalTable table;
  for (const auto& noun : cfg.nouns) {
    const std::string prompt = substitute_noun(cfg.prompt_template, noun);
    const std::string plus = substitute_noun(cfg.plus_template, noun);
    const std::string minus = substitute_noun(cfg.minus_template, noun);
    for (std::uint64_t seed : cfg.seeds) {
      GenerationConfig base;
      base.prompt = prompt;
      base.seed = seed;
      base.steps = cfg.steps;
      base.guidance_weight = cfg.guidance;
      const Sample reference = generate_with_deltas(backbone, encoder, base).image;
      const double ref_clip = clip_bi(adapters, reference, plus, minus);

      for (SamplingMode mode : cfg.modes) {
        for (double scale : cfg.scales) {
          GenerationConfig gc = base;
          DeltaApplication app;
          app.delta = delta;
          app.subject_word = noun;
          app.scale = scale;
          app.delay_steps = mode == SamplingMode::Delayed ? cfg.delay_steps : 0;
          gc.applications.push_back(app);
          const Sample image = generate_with_deltas(backbone, encoder, gc).image;

          EvalRow row;
          row.noun = noun;
          row.seed = seed;
          row.scale = scale;
          row.mode = mode;
          row.clip_bi = clip_bi(adapters, image, plus, minus);
          row.delta_clip_bi = row.clip_bi - ref_clip;
          const auto change = image_change(adapters, image, reference);
          row.perceptual_change = change.at("perceptual_change");
          row.global_similarity = change.at("global_similarity");
          row.reid = reid_similarity(adapters, image, reference);
          table.rows.push_back(std::move(row));
        }
      }
    }
  }

  for (SamplingMode mode : cfg.modes) {
    for (double scale : cfg.scales) {
      std::vector<double> cb, dcb, pc, gs, rd;
      for (const auto& r : table.rows) {
        if (r.mode != mode || r.scale != scale) continue;
        cb.push_back(r.clip_bi);
        dcb.push_back(r.delta_clip_bi);
        pc.push_back(r.perceptual_change);
        gs.push_back(r.global_similarity);
        if (r.reid) rd.push_back(*r.reid);
      }
      table.aggregates.push_back(
          {scale, mode, mean_std(cb), mean_std(dcb), mean_std(pc), mean_std(gs), mean_std(rd)});
    }
  }
  return table;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double metric_of(const EvalAggregate& a, std::string_view metric) {
  if (metric == "clip_bi") return a.clip_bi.mean;
  if (metric == "delta_clip_bi") return a.delta_clip_bi.mean;
  if (metric == "perceptual_change") return a.perceptual_change.mean;
  if (metric == "global_similarity") return a.global_similarity.mean;
  if (metric == "reid") return a.reid.mean;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(metric) + "'");
}

}  // namespace

std::string EvalTable::to_csv(double cosine_scale) const {
  std::ostringstream out;
  out << "noun,seed,scale,mode,clip_bi,delta_clip_bi,perceptual_change,global_similarity,reid\n";
  for (const auto& r : rows) {
    out << r.noun << ',' << r.seed << ',' << fmt(r.scale) << ',' << to_string(r.mode) << ','
        << fmt(r.clip_bi * cosine_scale) << ',' << fmt(r.delta_clip_bi * cosine_scale) << ','
        << fmt(r.perceptual_change) << ',' << fmt(r.global_similarity * cosine_scale) << ',';
    if (r.reid) out << fmt(*r.reid * cosine_scale);
    out << '\n';
  }
  return out.str();
}

std::string EvalTable::to_svg(std::string_view metric) const {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const auto& a : aggregates) {
    const double y = metric_of(a, metric);
    if (first) {
      xmin = xmax = a.scale;
      ymin = ymax = y;
      first = false;
    }
    xmin = std::min(xmin, a.scale);
    xmax = std::max(xmax, a.scale);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">scale</text>\n"
      << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2
      << ")\" text-anchor=\"middle\">" << metric << "</text>\n"
      << "<text x=\"" << L << "\" y=\"" << H - B + 15 << "\" font-size=\"10\">" << fmt(xmin) << "</text>\n"
      << "<text x=\"" << W - R << "\" y=\"" << H - B + 15 << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(xmax) << "</text>\n"
      << "<text x=\"" << L - 4 << "\" y=\"" << py(ymin) << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ymin) << "</text>\n"
      << "<text x=\"" << L - 4 << "\" y=\"" << py(ymax) + 10 << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ymax) << "</text>\n";
  const char* colours[] = {"#1f77b4", "#ff7f0e"};
  for (SamplingMode mode : {SamplingMode::Normal, SamplingMode::Delayed}) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& a : aggregates)
      if (a.mode == mode) pts.emplace_back(a.scale, metric_of(a, metric));
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end());
    const char* colour = colours[mode == SamplingMode::Normal ? 0 : 1];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << W - R - 80 << "\" y=\"" << (mode == SamplingMode::Normal ? T : T + 15)
        << "\" fill=\"" << colour << "\">" << to_string(mode) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace adelta
