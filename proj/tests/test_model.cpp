#include <cmath>

#include "adelta/model.hpp"
#include "adelta/random.hpp"
#include "adelta/toy_models.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adelta;

namespace {

// Scalar sample space with a hand-made schedule.
class ScalarBackbone : public Backbone {
 public:
  explicit ScalarBackbone(NoiseSchedule s) : schedule_(std::move(s)) {}
  const std::string& id() const override { return id_; }
  ImageShape image_shape() const override { return {1, 1, 1}; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  std::size_t embedding_dim() const override { return 1; }
  std::vector<std::string> supported_encoders() const override { return {}; }
  Sample predict_x0(const Sample&, const Conditioning&, int) const override { return Sample({1, 1, 1}); }
  Matrix embedding_vjp(const Sample&, const Conditioning& c, int, std::span<const double>) const override {
    return Matrix(c.embedding.rows(), c.embedding.cols());
  }

 private:
  std::string id_ = "scalar";
  NoiseSchedule schedule_;
};

}  // namespace

TEST_CASE("toy whitespace encoder tokenizes with BOS/EOS") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a photo of a woman");
  REQUIRE(tp.size() == 7);
  CHECK(tp.embeddings.rows() == 7);
  CHECK(tp.embeddings.cols() == enc->embedding_dim());
  CHECK(tp.tokens.front().special);
  CHECK(tp.tokens.back().special);
  CHECK(tp.non_special_count() == 5);
  const char* words[] = {"a", "photo", "of", "a", "woman"};
  for (std::size_t i = 0; i < 5; ++i) CHECK(tp.token_text(i + 1) == words[i]);
}

TEST_CASE("encode errors and determinism") {
  auto enc = testing::toy_encoder();
  CHECK_THROWS_AS(enc->encode(""), Error);
  try {
    enc->encode("   \t ");
    FAIL("expected EmptyPrompt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyPrompt);
  }
  std::string long_prompt;
  for (int i = 0; i < 80; ++i) long_prompt += "cat ";
  try {
    enc->encode(long_prompt);
    FAIL("expected PromptTooLong");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PromptTooLong);
  }
  CHECK(enc->encode("an old man on a bike").embeddings == enc->encode("an old man on a bike").embeddings);
}

TEST_CASE("word vectors are unit norm") {
  auto enc = testing::toy_encoder(false);
  for (const char* w : {"woman", "old", "a", "firefighter"}) {
    const auto v = enc->word_vector(w);
    double s = 0;
    for (double x : v) s += x * x;
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("aggregating encoder folds adjectives into the next noun") {
  auto agg = testing::toy_encoder(true);
  const auto tp = agg->encode("an old smiling woman");
  // BOS an old smiling woman EOS
  REQUIRE(tp.size() == 6);
  const Eigen::VectorXd expect = testing::to_eigen_vec(agg->word_vector("woman")) +
                      testing::to_eigen_vec(agg->word_vector("old")) +
                      testing::to_eigen_vec(agg->word_vector("smiling"));
  const auto row = testing::to_eigen_vec(tp.embeddings.row(4));
  CHECK((row - expect).norm() < 1e-12);
  // Adjective rows themselves keep their own vectors.
  CHECK((testing::to_eigen_vec(tp.embeddings.row(2)) - testing::to_eigen_vec(agg->word_vector("old"))).norm() == 0.0);
  // Only the first noun after the adjectives absorbs them.
  const auto tp2 = agg->encode("an old man and a dog");
  CHECK((testing::to_eigen_vec(tp2.embeddings.row(6)) - testing::to_eigen_vec(agg->word_vector("dog"))).norm() == 0.0);
}

TEST_CASE("dual encoder concatenates widths") {
  auto a = testing::toy_encoder(false);
  ToyEncoderOptions o;
  o.embedding_dim = 24;
  o.salt = "second";
  auto b = std::make_shared<ToyTextEncoder>(o);
  ConcatTextEncoder dual("dual", a, b);
  CHECK(dual.embedding_dim() == 40);
  const auto tp = dual.encode("a photo of a woman");
  CHECK(tp.embeddings.cols() == 40);
  CHECK(tp.embeddings(5, 3) == a->encode("a photo of a woman").embeddings(5, 3));
  CHECK(tp.embeddings(5, 16 + 3) == b->encode("a photo of a woman").embeddings(5, 3));
  CHECK(make_text_encoder("toy-dual")->embedding_dim() > 16);
}

TEST_CASE("variance-preserving schedule") {
  const auto s = NoiseSchedule::variance_preserving(1000);
  REQUIRE(s.num_train_steps() == 1000);
  for (int t = 0; t <= 1000; ++t) {
    CHECK(std::abs(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t) - 1.0) <= 1e-6);
    CHECK(s.loss_weight(t) == 1.0);
    if (t > 0) {
      CHECK(s.alpha(t) <= s.alpha(t - 1));
      CHECK(s.sigma(t) >= s.sigma(t - 1));
    }
  }
  CHECK(s.alpha(1000) < 0.01);
  CHECK_THROWS_AS(s.alpha(1001), Error);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 1.1}, {0.0, 0.0}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5}, {0.5, 0.0}, {1.0, 1.0}), Error);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5}, {0.0, 0.5}, {1.0, 0.0}), Error);
}

TEST_CASE("add_noise endpoints and direct evaluation") {
  ScalarBackbone bb(NoiseSchedule({1.0, 1.0, 0.6, 0.0}, {0.0, 0.0, 0.8, 1.0}, {1, 1, 1, 1}));
  const Sample x0({1, 1, 1}, {1.0}), eps({1, 1, 1}, {0.5});
  CHECK(add_noise(bb, x0, eps, 1).values[0] == 1.0);
  CHECK(add_noise(bb, x0, eps, 3).values[0] == 0.5);
  CHECK(add_noise(bb, x0, eps, 2).values[0] == doctest::Approx(1.0).epsilon(1e-15));
  for (int t : {0, 4, -1}) {
    try {
      add_noise(bb, x0, eps, t);
      FAIL("expected TimestepOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TimestepOutOfRange);
    }
  }
}

TEST_CASE("toy backbone prediction is W times the content mean") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto tp = enc->encode("a photo of an old woman");
  const Sample x(bb->image_shape());
  const auto pred = bb->predict_x0(x, Conditioning::from(tp), 500);
  const Eigen::VectorXd expect = testing::to_eigen(bb->weights()) * testing::content_mean_ref(tp);
  CHECK(testing::rel_err(testing::to_eigen_vec(pred.values), expect) < 1e-12);

  Conditioning zero{Matrix(5, 16), {1, 0, 0, 0, 1}};
  for (double v : bb->predict_x0(x, zero, 10).values) CHECK(v == 0.0);

  Conditioning wide{Matrix(3, 17), {1, 0, 1}};
  try {
    bb->predict_x0(x, wide, 10);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  try {
    bb->predict_x0(x, Conditioning::from(tp), 0);
    FAIL("expected TimestepOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TimestepOutOfRange);
  }
}

TEST_CASE("toy backbone is linear in the embedding") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  const auto e1 = Conditioning::from(enc->encode("a photo of an old woman"));
  const auto e2 = Conditioning::from(enc->encode("a smiling man on a bike"));
  REQUIRE(e1.embedding.rows() == e2.embedding.rows());
  const double a = 0.7, b = -2.3;
  Conditioning mix = e1;
  for (std::size_t i = 0; i < mix.embedding.data().size(); ++i)
    mix.embedding.data()[i] = a * e1.embedding.data()[i] + b * e2.embedding.data()[i];
  const Sample x(bb->image_shape());
  const auto p1 = bb->predict_x0(x, e1, 3), p2 = bb->predict_x0(x, e2, 3), pm = bb->predict_x0(x, mix, 3);
  Eigen::VectorXd lin = a * testing::to_eigen_vec(p1.values) + b * testing::to_eigen_vec(p2.values);
  CHECK(testing::rel_err(testing::to_eigen_vec(pm.values), lin) < 1e-6);
}

TEST_CASE("embedding VJP matches finite differences") {
  auto enc = testing::toy_encoder();
  auto bb = testing::toy_backbone();
  auto cond = Conditioning::from(enc->encode("an old woman"));
  const Sample x(bb->image_shape());
  std::vector<double> cot{0.3, -1.0, 2.0, 0.1, 0.0, 0.5, -0.7, 1.2};
  const auto g = bb->embedding_vjp(x, cond, 7, cot);
  auto f = [&](const Conditioning& c) {
    const auto p = bb->predict_x0(x, c, 7);
    double s = 0;
    for (std::size_t i = 0; i < cot.size(); ++i) s += cot[i] * p.values[i];
    return s;
  };
  const double h = 1e-5;
  for (std::size_t r = 0; r < cond.embedding.rows(); ++r) {
    for (std::size_t c = 0; c < 16; c += 5) {
      auto plus = cond, minus = cond;
      plus.embedding(r, c) += h;
      minus.embedding(r, c) -= h;
      const double fd = (f(plus) - f(minus)) / (2 * h);
      CHECK(g(r, c) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(g(0, c) == 0.0);
    CHECK(g(cond.embedding.rows() - 1, c) == 0.0);
  }
}

TEST_CASE("guidance merge at weight one is the conditional prediction") {
  const Sample u({1, 2, 1}, {0.1, -3.0}), c({1, 2, 1}, {1.0 / 3.0, 7.0});
  CHECK(merge_guidance(u, c, 1.0) == c);
  const auto m = merge_guidance(u, c, 7.5);
  CHECK(m.values[1] == doctest::Approx(-3.0 + 7.5 * 10.0));
}

TEST_CASE("sampler determinism, step count and toy fixed point") {
  auto enc = testing::toy_encoder();
  auto inner = testing::toy_backbone();
  auto bb = std::make_shared<InstrumentedBackbone>(inner);
  const auto cond = Conditioning::from(enc->encode("a photo of an old woman"));
  const auto uncond = Conditioning::from(enc->encode_unconditional());
  auto provider = [&](int) -> const Conditioning& { return cond; };

  SamplerSettings s{42, 50, 7.5, true};
  const auto r1 = sample(*bb, provider, uncond, s);
  CHECK(bb->evaluations() == 100);
  const auto r2 = sample(*bb, provider, uncond, s);
  CHECK(r1.x0 == r2.x0);
  REQUIRE(r1.trajectory.size() == 50);
  CHECK(r1.trajectory.front().t == 1000);
  CHECK(r1.trajectory.front().x_t == gaussian_sample(inner->image_shape(), 42, 0));

  // Unconditional content mean is zero, so the guided fixed point is
  // w * W * mean(e).
  const Eigen::VectorXd w_mean =
      testing::to_eigen(inner->weights()) * testing::content_mean_ref(enc->encode("a photo of an old woman"));
  CHECK(testing::rel_err(testing::to_eigen_vec(r1.x0.values), 7.5 * w_mean) < 1e-12);

  bb->reset();
  SamplerSettings one{3, 1, 1.0, false};
  const auto r3 = sample(*bb, provider, uncond, one);
  CHECK(bb->evaluations() == 2);
  CHECK(r3.x0 == inner->predict_x0(gaussian_sample(inner->image_shape(), 3, 0), cond, 1000));

  SamplerSettings cfg1{9, 20, 1.0, false};
  const auto cond_only = sample(*bb, provider, uncond, cfg1);
  CHECK(testing::rel_err(testing::to_eigen_vec(cond_only.x0.values), w_mean) < 1e-12);
}

TEST_CASE("sampling timesteps descend over the grid") {
  const auto ts = sampling_timesteps(1000, 50);
  REQUIRE(ts.size() == 50);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() == 20);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
  CHECK(sampling_timesteps(1000, 1) == std::vector<int>{1000});
  CHECK_THROWS_AS(sampling_timesteps(1000, 0), Error);
}

TEST_CASE("model registry") {
  CHECK(make_text_encoder("toy-whitespace")->id() == "toy-whitespace");
  CHECK(make_text_encoder("toy-aggregating")->id() == "toy-aggregating");
  CHECK(make_backbone("toy-linear", "toy-aggregating")->image_shape() == ImageShape{2, 4, 1});
  CHECK_THROWS_AS(make_text_encoder("nope"), Error);
  CHECK(!text_encoder_ids().empty());
  CHECK(!backbone_ids().empty());
}
