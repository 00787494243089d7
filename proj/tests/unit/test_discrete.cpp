#include <fstream>

#include <gtest/gtest.h>

#include "emplace/discrete.hpp"
#include "emplace/error.hpp"
#include "emplace/rng.hpp"
#include "tempdir.hpp"

using namespace emplace;
using namespace emplace::train;

namespace {

model::TokenGrid grid_with_cls(std::vector<float> cls) {
  model::TokenGrid g;
  g.patches = model::VectorGrid(2, 1, cls.size());
  g.cls = std::move(cls);
  return g;
}

// Pairs whose label is "first cls coordinate increased", which a linear
// head over concat(cls_a, cls_b) can represent exactly.
std::vector<DiscretePair> separable_pairs(model::MemoryGridSource& src, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DiscretePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const float a = static_cast<float>(rng.normal()), noise = static_cast<float>(rng.normal());
    const bool change = rng.uniform() < 0.5;
    const float b = a + (change ? 1.0f : -1.0f) * static_cast<float>(0.5 + rng.uniform());
    const std::string ia = "s" + std::to_string(seed) + "a" + std::to_string(i);
    const std::string ib = "s" + std::to_string(seed) + "b" + std::to_string(i);
    src.put(ia, grid_with_cls({a, noise}));
    src.put(ib, grid_with_cls({b, noise}));
    out.push_back({ia, ib, change, "c"});
  }
  return out;
}

}  // namespace

TEST(Metrics, ConfusionCounts) {
  const auto m = eval_metrics({true, true, false, false, true}, {true, false, true, false, true});
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 1u);
  EXPECT_DOUBLE_EQ(m.acc, 0.6);
  EXPECT_DOUBLE_EQ(m.prec, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.rec, 2.0 / 3);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3);
  EXPECT_THROW(eval_metrics({true}, {}), DataError);
}

TEST(Metrics, UndefinedRatiosAreFlagged) {
  const auto m = eval_metrics({false, false}, {false, false});
  EXPECT_TRUE(m.prec_undefined);
  EXPECT_TRUE(m.rec_undefined);
  EXPECT_EQ(m.prec, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_DOUBLE_EQ(m.acc, 1.0);
}

TEST(DiscreteHead, ZeroLogitPredictsNoChange) {
  DiscreteHead h(2);
  const std::vector<double> a{1, 2}, b{3, 4};
  EXPECT_DOUBLE_EQ(h.probability(a, b), 0.5);
  EXPECT_FALSE(h.predict(a, b));
  h.params()[4] = 1e-9;
  EXPECT_TRUE(h.predict(a, b));
  h.params()[0] = 2.0;
  EXPECT_DOUBLE_EQ(h.logit(a, b), 2.0 + 1e-9);
  EXPECT_THROW(h.logit(std::vector<double>{1}, b), DataError);
}

TEST(DiscreteHead, CheckpointRoundTrip) {
  testing_support::TempDir dir;
  DiscreteHead h(3);
  for (std::size_t i = 0; i < h.params().size(); ++i) h.params()[i] = 0.25 * static_cast<double>(i);
  save_head(h, dir / "h.empw");
  const auto back = load_head(dir / "h.empw");
  ASSERT_EQ(back.cls_dim(), 3u);
  for (std::size_t i = 0; i < h.params().size(); ++i) EXPECT_EQ(back.params()[i], h.params()[i]);
}

TEST(Labels, CsvRoundTripAndErrors) {
  testing_support::TempDir dir;
  const std::vector<DiscretePair> pairs{{"a", "b", true, "c1"}, {"c", "d", false, "c2"}};
  write_labels_csv(dir / "l.csv", pairs);
  const auto back = read_labels_csv(dir / "l.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0].change);
  EXPECT_EQ(back[1].cluster_id, "c2");
  std::ofstream(dir / "bad.csv") << "img_a,img_b,label\nx,y,maybe\n";
  EXPECT_THROW(read_labels_csv(dir / "bad.csv"), DataError);
}

TEST(Labels, SplitPairsIsSeededPartition) {
  std::vector<DiscretePair> pairs;
  for (int i = 0; i < 50; ++i) pairs.push_back({"a" + std::to_string(i), "b", i % 2 == 0, ""});
  const auto s = split_pairs(pairs, 3);
  EXPECT_EQ(s.train.size(), 35u);
  EXPECT_EQ(s.val.size(), 10u);
  EXPECT_EQ(s.test.size(), 5u);
  EXPECT_EQ(split_pairs(pairs, 3).val[0].img_a, s.val[0].img_a);
}

TEST(Finetune, HeadLearnsSeparableTask) {
  model::MemoryGridSource src;
  const auto tr = separable_pairs(src, 200, 1);
  const auto va = separable_pairs(src, 60, 2);
  const auto te = separable_pairs(src, 60, 3);
  FinetuneConfig cfg;
  cfg.lr = 0.05;
  cfg.max_epochs = 60;
  cfg.patience_epochs = 10;
  const model::PassthroughEncoder enc;
  const auto res = finetune_discrete(enc, DiscreteHead(2), tr, va, src, cfg);
  EXPECT_GE(res.val.acc, 0.95);
  const auto pred = predict_pairs(enc, res.head, te, src);
  EXPECT_GE(eval_metrics(pred.preds, pred.labels).acc, 0.9);
  EXPECT_GT(res.head.params()[2], 0.0);  // weight on cls_b[0]
  EXPECT_LT(res.head.params()[0], 0.0);  // weight on cls_a[0]
}

TEST(Finetune, RejectsSingleClassAndFullModeWithoutToyEncoder) {
  model::MemoryGridSource src;
  auto tr = separable_pairs(src, 20, 1);
  const auto va = separable_pairs(src, 20, 2);
  const model::PassthroughEncoder enc;
  FinetuneConfig cfg;
  cfg.mode = FinetuneMode::full;
  EXPECT_THROW(finetune_discrete(enc, DiscreteHead(2), tr, va, src, cfg), ConfigError);
  cfg.mode = FinetuneMode::head_only;
  for (auto& p : tr) p.change = true;
  EXPECT_THROW(finetune_discrete(enc, DiscreteHead(2), tr, va, src, cfg), DataError);
}

TEST(Finetune, UnresolvedPairsAreDropped) {
  model::MemoryGridSource src;
  const auto pairs = separable_pairs(src, 5, 1);
  auto with_missing = pairs;
  with_missing.push_back({"nope", "nada", true, ""});
  const auto pred = predict_pairs(model::PassthroughEncoder(), DiscreteHead(2), with_missing, src);
  EXPECT_EQ(pred.preds.size(), 5u);
  EXPECT_EQ(pred.skipped, 1u);
}
