#include "adelta/toy_models.hpp"

#include <cctype>
#include <cmath>

#include "adelta/kernels.hpp"
#include "adelta/random.hpp"

namespace adelta {
namespace {

constexpr std::string_view kBos = "<|startoftext|>";
constexpr std::string_view kEos = "<|endoftext|>";

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c == '-' || c >= 128; }

struct RawPiece {
  std::size_t begin;
  std::size_t end;
  std::string lower;   // this piece
  std::string word;    // whole word the piece belongs to
  std::size_t word_index;
  bool punctuation;
};

std::vector<RawPiece> split_prompt(std::string_view text, const ToyEncoderOptions& opts) {
  std::vector<RawPiece> pieces;
  std::size_t i = 0;
  std::size_t word_index = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (!is_word_char(c)) {
      pieces.push_back({i, i + 1, std::string(1, text[i]), std::string(1, text[i]), word_index++, true});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
    const std::string lower = to_lower(text.substr(i, j - i));
    const auto split = opts.subword_splits.find(lower);
    if (split != opts.subword_splits.end()) {
      std::size_t pos = i;
      for (const auto& part : split->second) {
        pieces.push_back({pos, pos + part.size(), part, lower, word_index, false});
        pos += part.size();
      }
    } else {
      pieces.push_back({i, j, lower, lower, word_index, false});
    }
    ++word_index;
    i = j;
  }
  return pieces;
}

}  // namespace

std::set<std::string> ToyEncoderOptions::default_nouns() {
  return {"person",  "woman",   "man",     "child",   "girl",   "boy",     "people",
          "car",     "bike",    "bicycle", "dog",     "cat",    "house",   "photo",
          "picture", "portrait", "sofa",   "flat",    "firefighter", "chef", "doctor",
          "teacher", "student", "garage",  "street",  "room",   "bird",    "hand",
          "shoulder", "body",   "face",    "hair",    "dress",  "suit",    "vehicle",
          "truck",   "park",    "beach",   "city",    "kitchen", "builder", "athlete",
          "dancer",  "painting", "image"};
}

std::set<std::string> ToyEncoderOptions::default_function_words() {
  return {"a",    "an",   "the",  "of",   "in",   "on",   "at",   "with", "and",  "or",
          "her",  "his",  "their", "its", "is",   "are",  "to",   "for",  "by",   "from",
          "this", "that", "sitting", "standing", "parked", "wearing", "holding", "next"};
}

std::map<std::string, std::vector<std::string>> ToyEncoderOptions::default_subword_splits() {
  return {{"firefighter", {"fire", "fighter"}}, {"bodybuilder", {"body", "builder"}}};
}

ToyTextEncoder::ToyTextEncoder(ToyEncoderOptions opts) : opts_(std::move(opts)) {
  if (opts_.embedding_dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding_dim must be > 0");
  if (opts_.max_tokens < 2) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 2");
}

std::vector<double> ToyTextEncoder::word_vector(std::string_view word) const {
  CounterRng rng(fnv1a64(word), fnv1a64(opts_.salt));
  std::vector<double> v(opts_.embedding_dim);
  for (auto& x : v) x = rng.normal();
  const double norm = std::sqrt(kernels::dot(v, v));
  kernels::scale(1.0 / norm, v);
  return v;
}

TokenizedPrompt ToyTextEncoder::encode(std::string_view prompt) const {
  const auto pieces = split_prompt(prompt, opts_);
  if (pieces.empty()) throw Error(ErrorCode::EmptyPrompt, "prompt is empty after normalization");
  const std::size_t n = pieces.size() + 2;
  if (n > opts_.max_tokens)
    throw Error(ErrorCode::PromptTooLong, std::to_string(n) + " tokens exceed the limit of " +
                                              std::to_string(opts_.max_tokens));

  TokenizedPrompt tp;
  tp.text = std::string(prompt);
  tp.encoder_id = opts_.id;
  tp.embeddings = Matrix(n, opts_.embedding_dim);
  tp.tokens.reserve(n);

  auto put_row = [&](std::size_t r, std::string_view key) {
    const auto v = word_vector(key);
    std::copy(v.begin(), v.end(), tp.embeddings.row(r).begin());
  };

  tp.tokens.push_back({static_cast<std::int64_t>(fnv1a64(kBos) & 0x7fffffff), 0, 0, true});
  put_row(0, kBos);

  std::vector<double> pending(opts_.embedding_dim, 0.0);
  bool has_pending = false;
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto& p = pieces[k];
    const std::size_t r = k + 1;
    tp.tokens.push_back({static_cast<std::int64_t>(fnv1a64(p.lower) & 0x7fffffff), p.begin, p.end,
                         false});
    put_row(r, p.lower);
    if (!opts_.aggregate || p.punctuation) continue;
    if (opts_.nouns.count(p.word)) {
      if (has_pending) kernels::axpy(1.0, pending, tp.embeddings.row(r));
      // Pending adjectives are consumed once the noun's last piece is seen.
      const bool last_piece = k + 1 == pieces.size() || pieces[k + 1].word_index != p.word_index;
      if (last_piece) {
        std::fill(pending.begin(), pending.end(), 0.0);
        has_pending = false;
      }
    } else if (!opts_.function_words.count(p.word)) {
      kernels::axpy(1.0, tp.embeddings.row(r), pending);
      has_pending = true;
    }
  }

  tp.tokens.push_back({static_cast<std::int64_t>(fnv1a64(kEos) & 0x7fffffff), prompt.size(),
                       prompt.size(), true});
  put_row(n - 1, kEos);
  return tp;
}

TokenizedPrompt ToyTextEncoder::encode_unconditional() const {
  TokenizedPrompt tp;
  tp.encoder_id = opts_.id;
  tp.embeddings = Matrix(2, opts_.embedding_dim);
  tp.tokens.push_back({static_cast<std::int64_t>(fnv1a64(kBos) & 0x7fffffff), 0, 0, true});
  tp.tokens.push_back({static_cast<std::int64_t>(fnv1a64(kEos) & 0x7fffffff), 0, 0, true});
  auto bos = word_vector(kBos);
  auto eos = word_vector(kEos);
  std::copy(bos.begin(), bos.end(), tp.embeddings.row(0).begin());
  std::copy(eos.begin(), eos.end(), tp.embeddings.row(1).begin());
  return tp;
}

ConcatTextEncoder::ConcatTextEncoder(std::string id, std::shared_ptr<const TextEncoder> first,
                                     std::shared_ptr<const TextEncoder> second)
    : id_(std::move(id)), first_(std::move(first)), second_(std::move(second)) {}

std::size_t ConcatTextEncoder::embedding_dim() const {
  return first_->embedding_dim() + second_->embedding_dim();
}

std::size_t ConcatTextEncoder::max_tokens() const {
  return std::min(first_->max_tokens(), second_->max_tokens());
}

TokenizedPrompt ConcatTextEncoder::concat(TokenizedPrompt a, const TokenizedPrompt& b) const {
  if (a.size() != b.size())
    throw Error(ErrorCode::EncoderMismatch, "concatenated encoders tokenized differently");
  Matrix m(a.size(), embedding_dim());
  const std::size_t da = a.embeddings.cols();
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto dst = m.row(r);
    std::copy(a.embeddings.row(r).begin(), a.embeddings.row(r).end(), dst.begin());
    std::copy(b.embeddings.row(r).begin(), b.embeddings.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(da));
  }
  a.embeddings = std::move(m);
  a.encoder_id = id_;
  return a;
}

TokenizedPrompt ConcatTextEncoder::encode(std::string_view prompt) const {
  if (auto n = first_->encode(prompt).size(); n > max_tokens())
    throw Error(ErrorCode::PromptTooLong, "prompt exceeds token limit");
  return concat(first_->encode(prompt), second_->encode(prompt));
}

TokenizedPrompt ConcatTextEncoder::encode_unconditional() const {
  return concat(first_->encode_unconditional(), second_->encode_unconditional());
}

ToyLinearBackbone::ToyLinearBackbone(ToyBackboneOptions opts)
    : opts_(std::move(opts)), weights_(opts_.image_shape.size(), opts_.embedding_dim) {
  CounterRng rng(opts_.weight_seed, 0x5eed);
  for (auto& w : weights_.data()) w = rng.normal();
}

ToyLinearBackbone::ToyLinearBackbone(ToyBackboneOptions opts, Matrix weights)
    : opts_(std::move(opts)), weights_(std::move(weights)) {
  if (weights_.rows() != opts_.image_shape.size() || weights_.cols() != opts_.embedding_dim)
    throw Error(ErrorCode::ShapeMismatch, "weights must be (image size) x embedding_dim");
}

void ToyLinearBackbone::check_inputs(const Sample& x_t, const Conditioning& cond, int t) const {
  if (cond.embedding.cols() != opts_.embedding_dim)
    throw Error(ErrorCode::DimensionMismatch,
                "embedding width " + std::to_string(cond.embedding.cols()) + " != backbone width " +
                    std::to_string(opts_.embedding_dim));
  if (x_t.shape != opts_.image_shape)
    throw Error(ErrorCode::ShapeMismatch, "x_t does not match the backbone image shape");
  if (t <= 0 || t > opts_.schedule.num_train_steps())
    throw Error(ErrorCode::TimestepOutOfRange, "t must lie in (0, T]");
}

Sample ToyLinearBackbone::predict_x0(const Sample& x_t, const Conditioning& cond, int t) const {
  check_inputs(x_t, cond, t);
  const auto mean = content_mean(cond);
  Sample out(opts_.image_shape);
  for (std::size_t i = 0; i < weights_.rows(); ++i) out.values[i] = kernels::dot(weights_.row(i), mean);
  return out;
}

Matrix ToyLinearBackbone::embedding_vjp(const Sample& x_t, const Conditioning& cond, int t,
                                        std::span<const double> cotangent) const {
  check_inputs(x_t, cond, t);
  if (cotangent.size() != weights_.rows())
    throw Error(ErrorCode::ShapeMismatch, "cotangent does not match the image size");
  std::vector<double> wt_g(opts_.embedding_dim, 0.0);
  for (std::size_t i = 0; i < weights_.rows(); ++i) kernels::axpy(cotangent[i], weights_.row(i), wt_g);

  Matrix grad(cond.embedding.rows(), cond.embedding.cols());
  std::size_t n = 0;
  for (std::size_t r = 0; r < grad.rows(); ++r)
    if (!(r < cond.special.size() && cond.special[r])) ++n;
  if (n == 0) return grad;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    if (r < cond.special.size() && cond.special[r]) continue;
    kernels::axpy(inv, wt_g, grad.row(r));
  }
  return grad;
}

std::shared_ptr<const TextEncoder> make_text_encoder(std::string_view id) {
  if (id == "toy-whitespace") return std::make_shared<ToyTextEncoder>();
  if (id == "toy-aggregating") {
    ToyEncoderOptions o;
    o.id = "toy-aggregating";
    o.aggregate = true;
    return std::make_shared<ToyTextEncoder>(std::move(o));
  }
  if (id == "toy-dual") {
    ToyEncoderOptions a;
    a.id = "toy-dual/l";
    a.embedding_dim = 768;
    a.aggregate = true;
    a.salt = "l";
    ToyEncoderOptions b = a;
    b.id = "toy-dual/g";
    b.embedding_dim = 1280;
    b.salt = "g";
    return std::make_shared<ConcatTextEncoder>("toy-dual", std::make_shared<ToyTextEncoder>(a),
                                               std::make_shared<ToyTextEncoder>(b));
  }
  throw Error(ErrorCode::NotFound, "unknown text encoder '" + std::string(id) + "'");
}

std::shared_ptr<const Backbone> make_backbone(std::string_view id, std::string_view encoder_id) {
  if (id != "toy-linear")
    throw Error(ErrorCode::NotFound, "unknown backbone '" + std::string(id) + "'");
  const auto encoder = make_text_encoder(encoder_id);
  ToyBackboneOptions o;
  o.embedding_dim = encoder->embedding_dim();
  o.supported_encoders = {std::string(encoder_id)};
  return std::make_shared<ToyLinearBackbone>(std::move(o));
}

std::vector<std::string> text_encoder_ids() { return {"toy-whitespace", "toy-aggregating", "toy-dual"}; }
std::vector<std::string> backbone_ids() { return {"toy-linear"}; }

}  // namespace adelta
