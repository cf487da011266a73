#include <gtest/gtest.h>

#include <cmath>

#include "esd/synth.hpp"
#include "esd/train.hpp"
#include "support.hpp"

using namespace esd;
using namespace esd::train;
using model::Mat;
using model::ParamSet;

namespace {

struct TinySetup {
  std::vector<model::Example> train_set;
  std::vector<model::Example> valid_set;
  model::Model init;
};

TinySetup tiny_setup() {
  corpus::SynthConfig sc;
  sc.n_conversations = 6;
  sc.seed = 5;
  const corpus::Corpus c = corpus::generate_synthetic(sc);
  const corpus::Vocabulary v = corpus::build_vocab(c, 200);
  auto mc = esd::testing::tiny_config(v, 17);
  mc.max_len = 64;
  const persona::RuleExtractor ex;
  const auto gold = model::gold_turns(c, ex);
  auto examples = model::to_examples(gold, v, static_cast<std::size_t>(mc.max_len));
  std::vector<model::Example> valid(examples.begin(), examples.begin() + 3);
  return {examples, valid, model::Model(mc)};
}

TrainConfig fast_config(int epochs) {
  TrainConfig c = preset("desk");
  c.epochs = epochs;
  c.warmup_steps = 5;
  c.seed = 21;
  return c;
}

}  // namespace

TEST(LearningRate, WarmupExamples) {
  const TrainConfig paper = preset("paper");
  EXPECT_DOUBLE_EQ(lr_at(50, paper), 1.25e-5);
  EXPECT_DOUBLE_EQ(lr_at(100, paper), 2.5e-5);
  EXPECT_DOUBLE_EQ(lr_at(10'000, paper), 2.5e-5);
  EXPECT_THROW(lr_at(0, paper), InvalidArgument);
  double prev = 0.0;
  for (int s = 1; s <= 300; ++s) {
    const double lr = lr_at(s, paper);
    EXPECT_GE(lr, prev);
    if (s >= 100) EXPECT_DOUBLE_EQ(lr, paper.lr_base);
    prev = lr;
  }
  TrainConfig none = paper;
  none.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(lr_at(1, none), paper.lr_base);
}

TEST(Presets, Values) {
  const TrainConfig d = preset("desk");
  EXPECT_DOUBLE_EQ(d.lr_base, 3e-3);
  EXPECT_EQ(d.batch_size_train, 8);
  EXPECT_EQ(d.epochs, 300);
  const TrainConfig p = preset("paper");
  EXPECT_DOUBLE_EQ(p.lr_base, 2.5e-5);
  EXPECT_EQ(p.batch_size_train, 4);
  EXPECT_EQ(p.batch_size_valid, 16);
  EXPECT_EQ(p.epochs, 10);
  for (const auto& c : {d, p}) {
    EXPECT_DOUBLE_EQ(c.beta1, 0.9);
    EXPECT_DOUBLE_EQ(c.beta2, 0.999);
    EXPECT_EQ(c.warmup_steps, 100);
    EXPECT_DOUBLE_EQ(c.weight_decay, 0.0);
  }
  EXPECT_THROW(preset("huge"), InvalidArgument);
  TrainConfig bad = d;
  bad.beta2 = 1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = d;
  bad.warmup_steps = -1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(AdamW, TwoStepsMatchHandComputation) {
  ParamSet p;
  p.add("x", Mat::Constant(1, 1, 1.0));
  ParamSet g = p.zeros_like();
  AdamW opt(p, 0.9, 0.999, 1e-8, 0.1);
  const double lr = 0.01;
  const double grads[2] = {0.5, -2.0};
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    g["x"](0, 0) = grads[t - 1];
    opt.step(p, g, lr);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    x = x - lr * 0.1 * x - lr * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p["x"](0, 0), x, 1e-15);
  }
  EXPECT_EQ(opt.steps_taken(), 2);
}

TEST(Clipping, GlobalNorm) {
  ParamSet g;
  g.add("a", Mat::Constant(1, 1, 3.0));
  g.add("b", Mat::Constant(1, 1, 4.0));
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g["a"](0, 0), 0.6, 1e-15);
  EXPECT_NEAR(g["b"](0, 0), 0.8, 1e-15);
  EXPECT_NEAR(clip_global_norm(g, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(g["a"](0, 0), 0.6, 1e-15);
  ParamSet h;
  h.add("a", Mat::Constant(1, 1, 30.0));
  EXPECT_DOUBLE_EQ(clip_global_norm(h, 0.0), 30.0);
  EXPECT_DOUBLE_EQ(h["a"](0, 0), 30.0);
}

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  const TinySetup s = tiny_setup();
  const TrainResult r = train::train(s.init, s.train_set, {}, fast_config(0));
  EXPECT_EQ(r.best.params(), s.init.params());
  EXPECT_TRUE(r.report.epochs.empty());
  EXPECT_EQ(r.report.selected_epoch, 0);
  EXPECT_EQ(r.report.to_csv(), "epoch,train_loss,valid_loss,selected\n");
}

TEST(Train, RejectsEmptySets) {
  const TinySetup s = tiny_setup();
  EXPECT_THROW(train::train(s.init, {}, s.valid_set, fast_config(1)), InvalidArgument);
  EXPECT_THROW(train::train(s.init, s.train_set, {}, fast_config(1)), InvalidArgument);
  EXPECT_THROW(validate(s.init, {}), InvalidArgument);
}

TEST(Train, DeterministicReportAndSelection) {
  const TinySetup s = tiny_setup();
  std::vector<EpochRecord> seen;
  const TrainResult a = train::train(s.init, s.train_set, s.valid_set, fast_config(12),
                              [&](const EpochRecord& e) { seen.push_back(e); });
  const TrainResult b = train::train(s.init, s.train_set, s.valid_set, fast_config(12));
  EXPECT_EQ(a.report.to_csv(), b.report.to_csv());
  EXPECT_EQ(a.best.params(), b.best.params());
  ASSERT_EQ(seen.size(), 12u);
  ASSERT_EQ(a.report.epochs.size(), 12u);

  double best = 1e300;
  for (const auto& e : a.report.epochs) best = std::min(best, e.valid_loss);
  const auto& chosen = a.report.epochs.at(static_cast<std::size_t>(a.report.selected_epoch - 1));
  EXPECT_EQ(chosen.valid_loss, best);
  EXPECT_NEAR(validate(a.best, s.valid_set), best, 1e-12);
  EXPECT_LT(a.report.epochs.back().train_loss, a.report.epochs.front().train_loss);

  TrainConfig other = fast_config(12);
  other.seed = 22;
  EXPECT_NE(train::train(s.init, s.train_set, s.valid_set, other).report.to_csv(), a.report.to_csv());
}

TEST(Train, CsvFormat) {
  TrainReport r;
  r.epochs = {{1, 2.5, 3.0}, {2, 1.0, 0.1}};
  r.selected_epoch = 2;
  EXPECT_EQ(r.to_csv(), "epoch,train_loss,valid_loss,selected\n1,2.5,3,0\n2,1,0.10000000000000001,1\n");
}

TEST(Validate, RepeatableAndUniformModelGivesLogV) {
  TinySetup s = tiny_setup();
  EXPECT_EQ(validate(s.init, s.valid_set), validate(s.init, s.valid_set));
  s.init.params()["out.w"].setZero();
  s.init.params()["out.b"].setZero();
  const double ln_v = std::log(static_cast<double>(s.init.vocab_size()));
  EXPECT_NEAR(validate(s.init, s.valid_set), ln_v, 1e-12);
  EXPECT_NEAR(mean_token_nll(s.init, s.valid_set, model::LossScope::ResponseOnly), ln_v, 1e-12);
}

TEST(Train, CorpusOverloadMatchesExampleOverload) {
  corpus::SynthConfig sc;
  sc.n_conversations = 4;
  sc.seed = 9;
  const corpus::Corpus c = corpus::generate_synthetic(sc);
  const corpus::Vocabulary v = corpus::build_vocab(c, 200);
  auto mc = esd::testing::tiny_config(v, 2);
  mc.max_len = 64;
  const model::Model init(mc);
  const persona::RuleExtractor ex;
  const auto examples = model::to_examples(model::gold_turns(c, ex), v, 64);
  const auto a = train::train(init, c, c, fast_config(2), ex);
  const auto b = train::train(init, examples, examples, fast_config(2));
  EXPECT_EQ(a.report.to_csv(), b.report.to_csv());
}
