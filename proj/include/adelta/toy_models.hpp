#pragma once

// Deterministic desk-scale encoder and backbone used as verification
// oracles, plus the id-keyed model registry.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "adelta/model.hpp"

namespace adelta {

struct ToyEncoderOptions {
  std::string id = "toy-whitespace";
  std::size_t embedding_dim = 16;
  std::size_t max_tokens = 77;
  // Fold each adjective's vector into the next noun's row(s), the way a
  // causal text encoder aggregates attributes into their subject.
  bool aggregate = false;
  // Salt mixed into the word hash so that two encoders of equal width
  // produce unrelated vectors.
  std::string salt;
  std::set<std::string> nouns = default_nouns();
  std::set<std::string> function_words = default_function_words();
  // Words tokenized into several pieces; the pieces concatenate to the word.
  std::map<std::string, std::vector<std::string>> subword_splits = default_subword_splits();

  static std::set<std::string> default_nouns();
  static std::set<std::string> default_function_words();
  static std::map<std::string, std::vector<std::string>> default_subword_splits();
};

// Whitespace/punctuation tokenizer with BOS/EOS and hash-seeded unit-norm
// word vectors.
class ToyTextEncoder : public TextEncoder {
 public:
  explicit ToyTextEncoder(ToyEncoderOptions opts = {});

  const std::string& id() const override { return opts_.id; }
  std::size_t embedding_dim() const override { return opts_.embedding_dim; }
  std::size_t max_tokens() const override { return opts_.max_tokens; }
  TokenizedPrompt encode(std::string_view prompt) const override;
  TokenizedPrompt encode_unconditional() const override;

  // Unit vector assigned to a (lower-case) word or special marker.
  std::vector<double> word_vector(std::string_view word) const;
  const ToyEncoderOptions& options() const { return opts_; }

 private:
  ToyEncoderOptions opts_;
};

// Two encoders with identical tokenization whose embeddings are
// concatenated column-wise, as in dual-encoder backbones (768 + 1280 = 2048).
class ConcatTextEncoder : public TextEncoder {
 public:
  ConcatTextEncoder(std::string id, std::shared_ptr<const TextEncoder> first,
                    std::shared_ptr<const TextEncoder> second);

  const std::string& id() const override { return id_; }
  std::size_t embedding_dim() const override;
  std::size_t max_tokens() const override;
  TokenizedPrompt encode(std::string_view prompt) const override;
  TokenizedPrompt encode_unconditional() const override;

 private:
  TokenizedPrompt concat(TokenizedPrompt a, const TokenizedPrompt& b) const;

  std::string id_;
  std::shared_ptr<const TextEncoder> first_;
  std::shared_ptr<const TextEncoder> second_;
};

struct ToyBackboneOptions {
  std::string id = "toy-linear";
  std::size_t embedding_dim = 16;
  ImageShape image_shape{2, 4, 1};
  std::uint64_t weight_seed = 7;
  NoiseSchedule schedule = NoiseSchedule::variance_preserving(1000);
  std::vector<std::string> supported_encoders{"toy-whitespace", "toy-aggregating"};
};

// x0_hat(x_t, e, t) = W * mean(non-special rows of e), W a seeded m x d
// Gaussian matrix. Independent of x_t and t.
class ToyLinearBackbone : public Backbone {
 public:
  explicit ToyLinearBackbone(ToyBackboneOptions opts = {});
  // Explicit weights (rows = image_shape.size()).
  ToyLinearBackbone(ToyBackboneOptions opts, Matrix weights);

  const std::string& id() const override { return opts_.id; }
  ImageShape image_shape() const override { return opts_.image_shape; }
  const NoiseSchedule& schedule() const override { return opts_.schedule; }
  std::size_t embedding_dim() const override { return opts_.embedding_dim; }
  std::vector<std::string> supported_encoders() const override { return opts_.supported_encoders; }

  Sample predict_x0(const Sample& x_t, const Conditioning& cond, int t) const override;
  Matrix embedding_vjp(const Sample& x_t, const Conditioning& cond, int t,
                       std::span<const double> cotangent) const override;

  const Matrix& weights() const { return weights_; }

 private:
  void check_inputs(const Sample& x_t, const Conditioning& cond, int t) const;

  ToyBackboneOptions opts_;
  Matrix weights_;
};

// Registry of built-in models keyed by id.
std::shared_ptr<const TextEncoder> make_text_encoder(std::string_view id);
std::shared_ptr<const Backbone> make_backbone(std::string_view id, std::string_view encoder_id);
std::vector<std::string> text_encoder_ids();
std::vector<std::string> backbone_ids();

}  // namespace adelta
