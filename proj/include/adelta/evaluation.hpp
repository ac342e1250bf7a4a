#pragma once

// Quantitative protocol: bi-directional relative image-text score, image
// change metrics, identity retention, and scale sweeps.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adelta/delta.hpp"
#include "adelta/engine.hpp"
#include "adelta/model.hpp"

namespace adelta {

// Produces unit-norm image and text embeddings in a shared space.
class ImageTextScorer {
 public:
  virtual ~ImageTextScorer() = default;
  virtual std::vector<double> embed_image(const Sample& image) const = 0;
  virtual std::vector<double> embed_text(std::string_view text) const = 0;
};

// Change score between two images; higher means more different.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual double change(const Sample& a, const Sample& b) const = 0;
};

// Global image embedding; similarity is the cosine of two embeddings.
class GlobalImageEmbedder {
 public:
  virtual ~GlobalImageEmbedder() = default;
  virtual std::vector<double> embed(const Sample& image) const = 0;
};

// Face embedding of the detected face, or nullopt when none is detected.
class FaceReid {
 public:
  virtual ~FaceReid() = default;
  virtual std::optional<std::vector<double>> embed_face(const Sample& image) const = 0;
};

struct MetricAdapters {
  std::shared_ptr<const ImageTextScorer> image_text_scorer;
  std::shared_ptr<const PerceptualMetric> perceptual_metric;
  std::shared_ptr<const GlobalImageEmbedder> global_image_embedder;
  std::shared_ptr<const FaceReid> face_reid;  // optional
};

double cosine(std::span<const double> a, std::span<const double> b);
std::vector<double> normalized(std::vector<double> v);

// --- toy and mock adapters -------------------------------------------------

// Text: normalize(W * content mean of E(text)); image: normalize(values).
// Matches the toy linear backbone, whose outputs lie in the span of W.
class ToyImageTextScorer : public ImageTextScorer {
 public:
  ToyImageTextScorer(std::shared_ptr<const TextEncoder> encoder, Matrix weights);
  std::vector<double> embed_image(const Sample& image) const override;
  std::vector<double> embed_text(std::string_view text) const override;

 private:
  std::shared_ptr<const TextEncoder> encoder_;
  Matrix weights_;
};

// Returns fixed embeddings from lookup tables; unknown keys throw NotFound.
class FixedImageTextScorer : public ImageTextScorer {
 public:
  void set_text(std::string text, std::vector<double> embedding);
  // Images are keyed by their first value.
  void set_image(double key, std::vector<double> embedding);
  std::vector<double> embed_image(const Sample& image) const override;
  std::vector<double> embed_text(std::string_view text) const override;

 private:
  std::map<std::string, std::vector<double>, std::less<>> text_;
  std::map<double, std::vector<double>> image_;
};

// Mean absolute difference after bilinear resize to resolution^2; a
// resolution of 0 compares the samples as given.
class MeanAbsPerceptualMetric : public PerceptualMetric {
 public:
  explicit MeanAbsPerceptualMetric(std::size_t resolution = 256) : resolution_(resolution) {}
  double change(const Sample& a, const Sample& b) const override;

 private:
  std::size_t resolution_;
};

// Flattened pixels after bilinear resize to resolution^2.
class ResizedPixelEmbedder : public GlobalImageEmbedder {
 public:
  explicit ResizedPixelEmbedder(std::size_t resolution = 224) : resolution_(resolution) {}
  std::vector<double> embed(const Sample& image) const override;

 private:
  std::size_t resolution_;
};

// Unit vector seeded by a hash of the sample bytes: unrelated images get
// independent random directions.
class HashingRandomEmbedder : public GlobalImageEmbedder {
 public:
  explicit HashingRandomEmbedder(std::size_t dim = 1024, std::uint64_t salt = 0)
      : dim_(dim), salt_(salt) {}
  std::vector<double> embed(const Sample& image) const override;

 private:
  std::size_t dim_;
  std::uint64_t salt_;
};

// Detects a "face" when the sample norm exceeds a threshold; the embedding
// is the normalized sample.
class NormThresholdFaceReid : public FaceReid {
 public:
  explicit NormThresholdFaceReid(double threshold) : threshold_(threshold) {}
  std::optional<std::vector<double>> embed_face(const Sample& image) const override;

 private:
  double threshold_;
};

// Adapters backed by the toy backbone's weights.
MetricAdapters toy_metric_adapters(std::shared_ptr<const TextEncoder> encoder, const Matrix& weights);

// --- metrics ---------------------------------------------------------------

// cos(img, text+) - cos(img, text-). Throws AdapterUnavailable, InvalidArgument
// on empty prompts.
double clip_bi(const MetricAdapters& adapters, const Sample& image, std::string_view prompt_plus,
               std::string_view prompt_minus);

double delta_clip_bi(const MetricAdapters& adapters, const Sample& image, const Sample& reference,
                     std::string_view prompt_plus, std::string_view prompt_minus);

// {perceptual_change, global_similarity}
std::map<std::string, double> image_change(const MetricAdapters& adapters, const Sample& image,
                                           const Sample& reference);

// Cosine of the two face embeddings; nullopt when either has no face or no
// ReID adapter is configured.
std::optional<double> reid_similarity(const MetricAdapters& adapters, const Sample& image,
                                      const Sample& reference);

// --- sweeps ----------------------------------------------------------------

enum class SamplingMode { Normal, Delayed };
std::string_view to_string(SamplingMode m);

struct EvalSweepConfig {
  std::vector<std::string> nouns;
  std::vector<double> scales;
  std::vector<std::uint64_t> seeds;
  std::vector<SamplingMode> modes{SamplingMode::Normal};
  // "{noun}" is replaced by each noun.
  std::string prompt_template = "a photo of a {noun}";
  std::string plus_template;
  std::string minus_template;
  int steps = 50;
  double guidance = 7.5;
  int delay_steps = 10;  // used by SamplingMode::Delayed
};

struct EvalRow {
  std::string noun;
  std::uint64_t seed = 0;
  double scale = 0.0;
  SamplingMode mode = SamplingMode::Normal;
  double clip_bi = 0.0;
  double delta_clip_bi = 0.0;
  double perceptual_change = 0.0;
  double global_similarity = 0.0;
  std::optional<double> reid;

  bool operator==(const EvalRow&) const = default;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t count = 0;
};

struct EvalAggregate {
  double scale = 0.0;
  SamplingMode mode = SamplingMode::Normal;
  MeanStd clip_bi;
  MeanStd delta_clip_bi;
  MeanStd perceptual_change;
  MeanStd global_similarity;
  MeanStd reid;  // over rows with a detected face
};

struct EvalTable {
  std::vector<EvalRow> rows;
  std::vector<EvalAggregate> aggregates;  // ordered by (mode, scale)

  // Columns: noun, seed, scale, mode, clip_bi, delta_clip_bi,
  // perceptual_change, global_similarity, reid. Cosine-valued columns are
  // multiplied by cosine_scale (1 = raw cosines).
  std::string to_csv(double cosine_scale = 1.0) const;
  // Scale-vs-metric line chart, one line per sampling mode.
  std::string to_svg(std::string_view metric = "delta_clip_bi") const;
};

std::string substitute_noun(std::string_view templ, std::string_view noun);

MeanStd mean_std(const std::vector<double>& values);

// Rows ordered noun-major, then seed, mode, scale. Each (noun, seed) is
// compared against its own scale-0 reference, which is generated even when
// 0 is missing from `scales`.
EvalTable sweep_evaluate(const Backbone& backbone, const TextEncoder& encoder,
                         const MetricAdapters& adapters, std::shared_ptr<const AttributeDelta> delta,
                         const EvalSweepConfig& cfg);

}  // namespace adelta
