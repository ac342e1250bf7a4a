#include <cmath>

#include "adelta/engine.hpp"
#include "adelta/pair_inversion.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adelta;

namespace {

Sample toy_target(const ToyLinearBackbone& bb, const TextEncoder& enc, const std::string& prompt) {
  return bb.predict_x0(Sample(bb.image_shape()), Conditioning::from(enc.encode(prompt)), 1);
}

PairInversionConfig tuned() {
  PairInversionConfig cfg;
  cfg.steps = 1000;
  cfg.optimizer.learning_rate = 0.001;
  return cfg;
}

bool special_rows_zero(const PairInversionDelta& d) {
  for (std::size_t r = 0; r < d.matrix.rows(); ++r)
    if (!d.optimized_mask[r])
      for (double v : d.matrix.row(r))
        if (v != 0.0) return false;
  return true;
}

PairInversionDelta random_delta(const TokenizedPrompt& tp, std::uint64_t seed) {
  PairInversionDelta d;
  d.source_prompt = tp.text;
  d.encoder_id = tp.encoder_id;
  d.matrix = Matrix(tp.size(), tp.embeddings.cols());
  d.optimized_mask = tp.special_mask();
  for (auto& m : d.optimized_mask) m = !m;
  CounterRng rng(seed);
  for (std::size_t r = 0; r < tp.size(); ++r)
    if (d.optimized_mask[r])
      for (auto& v : d.matrix.row(r)) v = rng.normal();
  return d;
}

}  // namespace

TEST_CASE("default configuration") {
  const PairInversionConfig cfg;
  CHECK(cfg.steps == 75);
  CHECK(cfg.batch_size == 1);
  CHECK(cfg.optimizer.learning_rate == 0.1);
  CHECK(cfg.optimizer.beta1 == 0.5);
  CHECK(cfg.optimizer.beta2 == 0.8);
  CHECK(cfg.optimizer.weight_decay == 0.333);
}

TEST_CASE("a self-generated target needs no delta") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto r = learn_pair_delta(*bb, *enc, toy_target(*bb, *enc, "a photo of a woman"), "a photo of a woman", {});
  double norm = 0;
  for (double v : r.delta.matrix.data()) norm += v * v;
  CHECK(std::sqrt(norm) < 1e-3);
}

TEST_CASE("reachable targets are reconstructed") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto target = toy_target(*bb, *enc, "a photo of an old smiling woman");
  const std::string caption = "a photo of a woman";
  const auto r = learn_pair_delta(*bb, *enc, target, caption, tuned());
  REQUIRE(r.losses.size() == 1000);
  CHECK(special_rows_zero(r.delta));
  const auto tp = enc->encode(caption);
  const Conditioning edited{interpolate_application(tp, r.delta, 1.0), tp.special_mask()};
  const double final_loss = reconstruction_loss(*bb, edited, target, 5, 4);
  const double initial = reconstruction_loss(*bb, Conditioning::from(tp), target, 5, 4);
  CHECK(final_loss <= 1e-4 * initial);

  // Cross-check against a direct least-squares solve for the mean shift.
  const Eigen::MatrixXd W = testing::to_eigen(bb->weights());
  const Eigen::VectorXd y = testing::to_eigen_vec(target.values);
  const Eigen::VectorXd m = testing::content_mean_ref(tp);
  TokenizedPrompt shifted = tp;
  shifted.embeddings = edited.embedding;
  const Eigen::VectorXd learned_shift = testing::content_mean_ref(shifted) - m;
  const Eigen::VectorXd ls_shift = W.completeOrthogonalDecomposition().solve(y - W * m);
  CHECK((W * (m + ls_shift) - y).norm() <= 1e-9 * y.norm());
  // A loss ratio of 1e-4 bounds the residual by 1e-2 of the initial one.
  const double initial_residual = (W * m - y).norm();
  CHECK((W * (m + learned_shift) - y).norm() <= 1e-2 * initial_residual);
  CHECK((W * learned_shift - W * ls_shift).norm() <= 1e-2 * initial_residual);
}

TEST_CASE("special rows stay zero at every length") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto target = toy_target(*bb, *enc, "a smiling man");
  for (int steps : {1, 2, 10, 75}) {
    PairInversionConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 2;
    const auto r = learn_pair_delta(*bb, *enc, target, "a photo of a man", cfg);
    CHECK(special_rows_zero(r.delta));
    CHECK(r.delta.optimized_mask.front() == 0);
    CHECK(r.delta.optimized_mask.back() == 0);
  }
}

TEST_CASE("determinism and errors") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto target = toy_target(*bb, *enc, "an old woman");
  PairInversionConfig cfg;
  cfg.seed = 4;
  const auto a = learn_pair_delta(*bb, *enc, target, "a woman", cfg);
  const auto b = learn_pair_delta(*bb, *enc, target, "a woman", cfg);
  CHECK(a.delta.matrix == b.delta.matrix);
  CHECK(a.losses == b.losses);
  CHECK_THROWS_AS(learn_pair_delta(*bb, *enc, Sample({3, 3, 1}), "a woman", cfg), Error);
  try {
    learn_pair_delta(*bb, *enc, target, "  ", cfg);
    FAIL("expected EmptyPrompt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPrompt);
  }
}

TEST_CASE("masking to the subject") {
  auto enc = testing::toy_encoder();
  const auto tp = enc->encode("a photo of a woman");
  REQUIRE(tp.size() == 7);
  const auto d = random_delta(tp, 1);
  const auto span = locate_subject(tp, "woman");
  const auto masked = mask_to_subject(d, span);
  std::size_t nonzero_rows = 0;
  for (std::size_t r = 0; r < 7; ++r) {
    bool nz = false;
    for (double v : masked.matrix.row(r)) nz = nz || v != 0.0;
    nonzero_rows += nz;
  }
  CHECK(nonzero_rows == 1);
  for (std::size_t c = 0; c < 16; ++c) CHECK(masked.matrix(5, c) == d.matrix(5, c));
  CHECK(mask_to_subject(masked, span).matrix == masked.matrix);

  const auto full = mask_to_subject(d, {1, 6, "a photo of a woman", 0});
  CHECK(full.matrix == d.matrix);
  const auto none = mask_to_subject(d, {0, 1, "<bos>", 0});
  for (double v : none.matrix.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(mask_to_subject(d, {5, 9, "x", 0}), Error);
}

TEST_CASE("interpolation is linear in s") {
  auto enc = testing::toy_encoder();
  const auto tp = enc->encode("a photo of a woman");
  const auto d = random_delta(tp, 2);
  CHECK(interpolate_application(tp, d, 0.0) == tp.embeddings);
  const auto one = interpolate_application(tp, d, 1.0);
  const auto half = interpolate_application(tp, d, 0.5);
  for (std::size_t i = 0; i < one.data().size(); ++i) {
    CHECK(one.data()[i] == tp.embeddings.data()[i] + d.matrix.data()[i]);
    CHECK(half.data()[i] == doctest::Approx((tp.embeddings.data()[i] + one.data()[i]) / 2).epsilon(1e-15));
  }
  for (auto [s1, s2] : {std::pair{0.2, 0.3}, {0.7, -0.4}, {1.0, 1.5}}) {
    const auto a = interpolate_application(tp, d, s1), b = interpolate_application(tp, d, s2);
    const auto ab = interpolate_application(tp, d, s1 + s2);
    for (std::size_t i = 0; i < ab.data().size(); ++i)
      CHECK(std::abs(a.data()[i] + b.data()[i] - tp.embeddings.data()[i] - ab.data()[i]) <= 1e-7);
  }
  CHECK_THROWS_AS(interpolate_application(enc->encode("a woman"), d, 0.5), Error);
}

TEST_CASE("subject rows become attribute deltas") {
  auto enc = testing::toy_encoder();
  const auto tp = enc->encode("a photo of a firefighter");
  const auto d = random_delta(tp, 3);
  const auto two = subject_row_to_attribute_delta(d, locate_subject(tp, "firefighter"), "look");
  REQUIRE(two.dim() == 16);
  for (std::size_t c = 0; c < 16; ++c)
    CHECK(two.vector[c] == static_cast<float>((d.matrix(5, c) + d.matrix(6, c)) / 2));
  CHECK(two.method == DeltaMethod::PairInversionMasked);
  const auto one = subject_row_to_attribute_delta(d, {2, 3, "photo", 0}, "look");
  for (std::size_t c = 0; c < 16; ++c) CHECK(one.vector[c] == static_cast<float>(d.matrix(2, c)));
  CHECK_THROWS_AS(subject_row_to_attribute_delta(d, {3, 3, "x", 0}, "x"), Error);

  // Applied through the engine at scale zero it changes nothing.
  auto bb = testing::toy_backbone();
  GenerationConfig base;
  base.prompt = "a photo of a woman";
  base.seed = 8;
  auto with = base;
  with.applications.push_back({std::make_shared<AttributeDelta>(two), "woman", Occurrence::first(), 0.0, 0});
  CHECK(generate_with_deltas(*bb, *enc, with).image == generate_with_deltas(*bb, *enc, base).image);
}

TEST_CASE("pair deltas serialize to JSON") {
  auto enc = testing::toy_encoder();
  const auto d = random_delta(enc->encode("a woman"), 4);
  const auto back = PairInversionDelta::from_json(nlohmann::json::parse(d.to_json().dump()));
  CHECK(back.matrix == d.matrix);
  CHECK(back.optimized_mask == d.optimized_mask);
  CHECK(back.source_prompt == d.source_prompt);
}
