#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "esd/checkpoint.hpp"
#include "esd/error.hpp"
#include "esd/examples.hpp"
#include "esd/model.hpp"
#include "esd/tape.hpp"
#include "esd/train.hpp"
#include "support.hpp"

using namespace esd;
using namespace esd::model;
using corpus::Vocabulary;

namespace {

Vocabulary words() { return Vocabulary({"i", "am", "a", "nurse", "feel", "sad", "you", "ok", ".", "tired"}); }

Model perturbed_tiny(std::uint64_t seed) {
  Model m(esd::testing::tiny_config(words(), seed));
  Rng rng(seed + 100);
  for (auto& t : m.params()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += 0.2 * normal01(rng);
  }
  return m;
}

Example tiny_example(const Vocabulary& v) {
  Example ex;
  ex.dialogue = v.encode("i am a nurse . [SEP] you ok");
  ex.dialogue[5] = Vocabulary::kSep;
  ex.persona = v.encode("i feel sad");
  ex.strategy = corpus::Strategy::ReflectionOfFeelings;
  ex.response = v.encode("you feel tired .");
  return ex;
}

Mat random_mat(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal01(rng);
  return m;
}

}  // namespace

TEST(Tape, GeluMatchesTanhApproximation) {
  Tape t(false);
  Mat x(1, 3);
  x << -1.5, 0.0, 2.0;
  const Mat y = t.value(t.gelu(t.constant(x)));
  for (int i = 0; i < 3; ++i) {
    const double v = x(0, i);
    const double ref = 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
    EXPECT_NEAR(y(0, i), ref, 1e-15);
  }
}

TEST(Tape, WeightedNllHandCase) {
  // Two targets with gold probabilities 0.5 and 0.25.
  Tape t(false);
  Mat logits(2, 3);
  logits << std::log(0.5), std::log(0.25), std::log(0.25), std::log(0.25), std::log(0.25), std::log(0.5);
  const std::vector<int> targets = {0, 1};
  const std::vector<double> w = {0.5, 0.5};
  const double loss = t.value(t.weighted_nll(t.constant(logits), targets, w))(0, 0);
  EXPECT_NEAR(loss, -(std::log(0.5) + std::log(0.25)) / 2.0, 1e-12);
  EXPECT_NEAR(loss, 1.0397207708399179, 1e-12);
}

TEST(Encode, ShapeDeterminismAndLimits) {
  const Model m(esd::testing::tiny_config(words()));
  const std::vector<TokenId> toks = m.vocab().encode("i am a nurse");
  const Mat h = encode(m, toks);
  EXPECT_EQ(h.rows(), 4);
  EXPECT_EQ(h.cols(), 8);
  EXPECT_EQ(h, encode(m, toks));
  EXPECT_TRUE(h.allFinite());
  std::vector<TokenId> too_long(33, 13);
  EXPECT_THROW(encode(m, too_long), InvalidArgument);
}

TEST(Encode, PersonaSentencesJoinedWithSep) {
  const Vocabulary v = words();
  persona::PersonaSet p;
  p.add("i am a nurse", 0);
  p.add("i feel sad", 2);
  const auto ids = encode_persona(v, p, 64);
  std::vector<TokenId> expected = v.encode("i am a nurse");
  expected.push_back(Vocabulary::kSep);
  for (auto t : v.encode("i feel sad")) expected.push_back(t);
  EXPECT_EQ(ids, expected);
  EXPECT_TRUE(encode_persona(v, persona::PersonaSet{}, 64).empty());
}

TEST(Encode, DialogueKeepsNewestTokens) {
  const Vocabulary v = words();
  const std::vector<corpus::Utterance> turns = {esd::testing::seeker("i am a nurse"), esd::testing::supporter("ok"),
                                                esd::testing::seeker("i feel sad")};
  const auto all = encode_dialogue(v, turns, 64);
  ASSERT_EQ(all.size(), 4u + 1 + 1 + 1 + 3);
  const auto cut = encode_dialogue(v, turns, 4);
  EXPECT_EQ(cut, std::vector<TokenId>(all.end() - 4, all.end()));
}

TEST(CrossFuse, SinglePersonaRowAttendsFully) {
  Rng rng(1);
  const Mat hd = random_mat(rng, 3, 4);
  const Mat hp = random_mat(rng, 1, 4);
  const CrossFused f = cross_fuse(hd, hp, 1e-5);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(f.attn_dialogue(i, 0), 1.0);
  Tape t(false);
  const Mat sum = hd.rowwise() + hp.row(0);
  const Mat expected = t.value(t.layernorm(t.constant(sum), Var{}, Var{}, 1e-5));
  EXPECT_LT((f.fused_dialogue - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrossFuse, HandCaseTwoByTwo) {
  Mat hd(1, 2), hp(2, 2);
  hd << 1, 0;
  hp << 1, 0, 0, 1;
  const CrossFused f = cross_fuse(hd, hp, 1e-5);
  const double e = std::exp(1.0);
  EXPECT_NEAR(f.attn_dialogue(0, 0), e / (e + 1), 1e-12);
  EXPECT_NEAR(f.attn_dialogue(0, 1), 1 / (e + 1), 1e-12);
  const Mat z = f.attn_dialogue * hp;
  EXPECT_NEAR(z(0, 0), 0.7310585786300049, 1e-12);
  EXPECT_NEAR(z(0, 1), 0.2689414213699951, 1e-12);
}

TEST(CrossFuse, AttentionRowsSumToOneAndNoScaling) {
  Rng rng(2);
  const Mat hd = random_mat(rng, 5, 6);
  const Mat hp = random_mat(rng, 3, 6);
  const CrossFused f = cross_fuse(hd, hp, 1e-5);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(f.attn_dialogue.row(i).sum(), 1.0, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(f.attn_persona.row(i).sum(), 1.0, 1e-12);
  // Unscaled logits: softmax(H_D H_P^T).
  const Mat s = hd * hp.transpose();
  for (int i = 0; i < 5; ++i) {
    const Eigen::RowVectorXd e = (s.row(i).array() - s.row(i).maxCoeff()).exp();
    EXPECT_LT((f.attn_dialogue.row(i) - e / e.sum()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CrossFuse, PersonaRowPermutationInvariance) {
  Rng rng(3);
  const Mat hd = random_mat(rng, 4, 6);
  const Mat hp = random_mat(rng, 5, 6);
  Mat perm(5, 6);
  const int order[] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) perm.row(i) = hp.row(order[i]);
  const CrossFused a = cross_fuse(hd, hp, 1e-5);
  const CrossFused b = cross_fuse(hd, perm, 1e-5);
  EXPECT_LT((a.attn_dialogue * hp - b.attn_dialogue * perm).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.fused_dialogue - b.fused_dialogue).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrossFuse, EmptyPersonaIsAnError) {
  Rng rng(4);
  EXPECT_THROW(cross_fuse(random_mat(rng, 2, 4), Mat(0, 4), 1e-5), InvalidArgument);
}

TEST(Combine, EqualInitialWeightsAndHandCases) {
  const FusionWeights w;
  for (double l : w.lambdas()) EXPECT_NEAR(l, 1.0 / 3.0, 1e-15);

  Rng rng(5);
  // Identical rows so the pooled persona term equals every row as well.
  const Mat x = random_mat(rng, 1, 4).replicate(3, 1);
  FusionWeights any;
  any.w = {0.3, -2.0, 1.1};
  EXPECT_LT((combine(x, x, x, any) - x).cwiseAbs().maxCoeff(), 1e-12);

  Mat a(1, 1), p(1, 1), h(1, 1);
  a << 2;
  p << 4;
  h << 0;
  EXPECT_NEAR(combine_with(a, p, h, {0.5, 0.25, 0.25})(0, 0), 2.0, 1e-15);
  EXPECT_EQ(combine_with(random_mat(rng, 3, 4), random_mat(rng, 2, 4), x, {0.0, 0.0, 1.0}), x);
  EXPECT_THROW(combine(random_mat(rng, 2, 4), x, x, w), InvalidArgument);
}

TEST(Combine, PersonaRowsArePooled) {
  Rng rng(6);
  const Mat fd = random_mat(rng, 2, 3);
  const Mat fp = random_mat(rng, 4, 3);
  const Mat hd = random_mat(rng, 2, 3);
  const Mat out = combine_with(fd, fp, hd, {0.2, 0.5, 0.3});
  const Eigen::RowVectorXd pooled = fp.colwise().mean();
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT((out.row(i) - (0.2 * fd.row(i) + 0.5 * pooled + 0.3 * hd.row(i))).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(FinalHidden, ShapeIndependentOfPersonaLengthAndBypass) {
  const Model m(esd::testing::tiny_config(words()));
  const auto d = m.vocab().encode("i am a nurse .");
  for (const char* p : {"sad", "i feel sad", "i feel sad . i am a nurse . you ok"}) {
    const Mat h = final_hidden(m, d, m.vocab().encode(p));
    EXPECT_EQ(h.rows(), 5);
    EXPECT_EQ(h.cols(), 8);
  }
  EXPECT_EQ(final_hidden(m, d, {}), encode(m, d));
  EXPECT_EQ(fuse_with_persona(m, encode(m, d), {}), encode(m, d));
  const auto p = m.vocab().encode("i feel sad");
  EXPECT_LT((fuse_with_persona(m, encode(m, d), p) - final_hidden(m, d, p)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Decoder, DistributionContract) {
  const Model m = perturbed_tiny(7);
  const Mat h = final_hidden(m, m.vocab().encode("i am a nurse"), m.vocab().encode("i feel sad"));
  const std::vector<TokenId> prefix = {Vocabulary::kBos, Vocabulary::strategy_id(corpus::Strategy::Question), 13};
  const auto p = decoder_step(m, h, prefix);
  ASSERT_EQ(p.size(), m.vocab_size());
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(p, decoder_step(m, h, prefix));
  EXPECT_THROW(decoder_step(m, h, std::vector<TokenId>{13}), InvalidArgument);
  EXPECT_THROW(decoder_step(m, h, std::vector<TokenId>(40, Vocabulary::kBos)), InvalidArgument);
}

TEST(Decoder, ZeroOutputProjectionIsUniform) {
  Model m(esd::testing::tiny_config(words()));
  m.params()["out.w"].setZero();
  const Mat h = encode(m, m.vocab().encode("i am"));
  const auto p = decoder_step(m, h, std::vector<TokenId>{Vocabulary::kBos});
  for (double x : p) EXPECT_NEAR(x, 1.0 / static_cast<double>(m.vocab_size()), 1e-15);
  Example ex = tiny_example(m.vocab());
  EXPECT_NEAR(forward_loss(m, ex), std::log(static_cast<double>(m.vocab_size())), 1e-12);
}

TEST(Decoder, Causal) {
  const Model m = perturbed_tiny(8);
  const Mat h = final_hidden(m, m.vocab().encode("i am a nurse"), m.vocab().encode("i feel sad"));
  const std::vector<TokenId> full = {Vocabulary::kBos, 7, 14, 15, 16, 17};
  const Mat all = decoder_logits(m, h, full);
  for (std::size_t t = 1; t <= full.size(); ++t) {
    const std::vector<TokenId> prefix(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(t));
    const Mat part = decoder_logits(m, h, prefix);
    EXPECT_LT((part.row(static_cast<Eigen::Index>(t - 1)) - all.row(static_cast<Eigen::Index>(t - 1))).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Loss, TargetsAreStrategyResponseEos) {
  const Vocabulary v = words();
  const Example ex = tiny_example(v);
  const auto in = ex.decoder_input();
  const auto tg = ex.targets();
  ASSERT_EQ(in.size(), ex.response.size() + 2);
  EXPECT_EQ(in[0], Vocabulary::kBos);
  EXPECT_EQ(in[1], Vocabulary::strategy_id(ex.strategy));
  EXPECT_EQ(tg.front(), Vocabulary::strategy_id(ex.strategy));
  EXPECT_EQ(tg.back(), Vocabulary::kEos);
  const Model m = perturbed_tiny(9);
  const auto nll = target_nll(m, ex);
  ASSERT_EQ(nll.size(), tg.size());
  const double mean = std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(nll.size());
  EXPECT_NEAR(forward_loss(m, ex), mean, 1e-12);
  EXPECT_NEAR(forward_loss(m, ex, LossScope::ResponseOnly),
              std::accumulate(nll.begin() + 1, nll.end(), 0.0) / static_cast<double>(nll.size() - 1), 1e-12);
}

// Analytic gradients of every parameter tensor against central differences.
TEST(Gradient, MatchesCentralDifferencesForEveryGroup) {
  Model m = perturbed_tiny(11);
  const Example ex = tiny_example(m.vocab());
  ParamSet grads = m.params().zeros_like();
  forward_backward(m, ex, grads);
  const double h = 1e-4;
  for (std::size_t g = 0; g < m.params().size(); ++g) {
    Mat& value = m.params().at(g).value;
    const Mat& analytic = grads.at(g).value;
    Mat numeric = Mat::Zero(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double keep = value.data()[i];
      value.data()[i] = keep + h;
      const double up = forward_loss(m, ex);
      value.data()[i] = keep - h;
      const double down = forward_loss(m, ex);
      value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double scale = std::max(analytic.norm(), numeric.norm());
    const double rel = scale < 1e-12 ? 0.0 : (analytic - numeric).norm() / scale;
    EXPECT_LT(rel, 1e-4) << m.params().at(g).name << " |g|=" << analytic.norm();
  }
}

TEST(Fusion, LambdaStaysOnSimplexUnderUpdates) {
  Model m = perturbed_tiny(12);
  const Example ex = tiny_example(m.vocab());
  train::AdamW opt(m.params(), 0.9, 0.999, 1e-8, 0.0);
  Rng rng(13);
  for (int step = 0; step < 100; ++step) {
    ParamSet grads = m.params().zeros_like();
    forward_backward(m, ex, grads);
    grads["fuse.w"] += 5.0 * random_mat(rng, 1, 3);
    opt.step(m.params(), grads, 0.5);
    const auto l = m.fusion().lambdas();
    EXPECT_NEAR(l[0] + l[1] + l[2], 1.0, 1e-12);
    for (double x : l) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
}

TEST(Checkpoint, RoundTripIsByteStable) {
  const Model m = perturbed_tiny(14);
  const std::string bytes = serialize_checkpoint(m);
  const Model back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.config().d_model, m.config().d_model);
  EXPECT_EQ(back.config().seed, m.config().seed);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(bytes.substr(0, 8), "ESDCKPT1");
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), ParseError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), ParseError);
}

TEST(ModelConfig, Validation) {
  auto c = esd::testing::tiny_config(words());
  c.n_heads = 3;
  EXPECT_THROW(Model{c}, InvalidArgument);
  auto ok = esd::testing::tiny_config(words());
  ParamSet p = Model::initial_params(ok);
  p["out.b"] = Mat::Zero(1, 2);
  EXPECT_THROW(Model(ok, p), ValidationError);
}
