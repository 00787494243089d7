#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "emplace/error.hpp"
#include "emplace/mining.hpp"
#include "emplace/rng.hpp"
#include "emplace/synth.hpp"
#include "emplace/train.hpp"
#include "tempdir.hpp"

using namespace emplace;
using namespace emplace::train;

namespace {

mining::Triplet trip(const std::string& a, const std::string& p, const std::string& n) {
  return {"c", a, p, n, 300, 800, 500};
}

// Random orthogonal matrix by Gram-Schmidt.
std::vector<std::vector<double>> random_rotation(std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    for (const auto& u : q) {
      double dot = 0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    q.push_back(v);
  }
  return q;
}

synth::SynthConfig small_city() {
  synth::SynthConfig cfg;
  cfg.n_regions = 4;
  cfg.clusters_per_region = 40;
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST(OrderPrediction, CountsStrictlyCloserPositives) {
  std::map<std::string, std::vector<double>> cls{{"a", {0, 0}}, {"p", {1, 0}}, {"n", {2, 0}}, {"t", {-1, 0}}};
  const auto lookup = [&](const std::string& id) -> const std::vector<double>* {
    auto it = cls.find(id);
    return it == cls.end() ? nullptr : &it->second;
  };
  const auto r = order_prediction({trip("a", "p", "n"), trip("a", "n", "p"), trip("a", "p", "t"), trip("a", "p", "x")}, lookup);
  EXPECT_EQ(r.total, 3u);
  EXPECT_EQ(r.correct, 1u);  // the tie counts as wrong
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_THROW(order_prediction({trip("x", "y", "z")}, lookup), DataError);
}

TEST(OrderPrediction, InvariantUnderIsometries) {
  Rng rng(4);
  const std::size_t d = 5;
  std::map<std::string, std::vector<double>> cls, moved;
  const auto rot = random_rotation(d, rng);
  std::vector<double> shift(d);
  for (auto& s : shift) s = rng.normal(0, 10);
  for (int i = 0; i < 60; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    std::vector<double> w(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) w[r] += rot[r][c] * v[c];
      w[r] += shift[r];
    }
    cls["i" + std::to_string(i)] = v;
    moved["i" + std::to_string(i)] = w;
  }
  std::vector<mining::Triplet> ts;
  for (int k = 0; k < 500; ++k) {
    ts.push_back(trip("i" + std::to_string(rng.index(60)), "i" + std::to_string(rng.index(60)),
                      "i" + std::to_string(rng.index(60))));
  }
  const auto of = [](const auto& m) {
    return [&m](const std::string& id) -> const std::vector<double>* { return &m.at(id); };
  };
  const auto a = order_prediction(ts, of(cls));
  const auto b = order_prediction(ts, of(moved));
  EXPECT_EQ(a.correct, b.correct);
}

TEST(EarlyStopping, StopsAfterPatienceAndKeepsFirstArgmax) {
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t patience = 1 + rng.index(4);
    EarlyStopping es(patience);
    std::vector<double> seen;
    while (!es.should_stop() && seen.size() < 40) {
      const double s = static_cast<double>(rng.index(6)) / 5.0;
      es.observe(s);
      seen.push_back(s);
    }
    const auto best = std::max_element(seen.begin(), seen.end());
    EXPECT_EQ(es.best_epoch(), static_cast<std::size_t>(best - seen.begin()) + 1);
    EXPECT_EQ(es.best_score(), *best);
    if (es.should_stop()) {
      EXPECT_EQ(seen.size() - es.best_epoch(), patience);
    }
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, ZeroLearningRateLeavesEncoderUnchanged) {
  const auto city = synth::generate(small_city());
  const synth::SynthGridSource src(city);
  const auto clusters = synth::truth_clusters(city);
  const auto ts = mining::mine(clusters, mining::find_si("SI-1"));
  ASSERT_FALSE(ts.empty());
  auto enc = model::ToyEncoder::random(16, 8, 1);
  const auto before = enc;
  TrainConfig cfg;
  cfg.lr = 0.0;
  optim::Adam adam(enc.num_params(), cfg.adam());
  const auto stats = train_epoch(enc, adam, ts, src, cfg, 3);
  EXPECT_GT(stats.steps, 0u);
  EXPECT_GT(stats.mean_loss, 0.0);
  for (std::size_t i = 0; i < enc.num_params(); ++i) EXPECT_EQ(enc.params()[i], before.params()[i]);
}

TEST(Train, MissingGridsAreSkipped) {
  model::MemoryGridSource src;
  auto enc = model::ToyEncoder::random(4, 8, 1);
  TrainConfig cfg;
  optim::Adam adam(enc.num_params(), cfg.adam());
  const auto stats = train_epoch(enc, adam, {trip("a", "b", "c")}, src, cfg, 1);
  EXPECT_EQ(stats.skipped, 1u);
  EXPECT_EQ(stats.steps, 0u);
}

TEST(Train, EpochIsDeterministicGivenSeed) {
  const auto city = synth::generate(small_city());
  const synth::SynthGridSource src(city);
  const auto ts = mining::mine(synth::truth_clusters(city), mining::find_si("SI-2"));
  TrainConfig cfg;
  cfg.lr = 1e-2;
  auto a = model::ToyEncoder::random(8, 8, 2), b = a;
  optim::Adam adam_a(a.num_params(), cfg.adam()), adam_b(b.num_params(), cfg.adam());
  train_epoch(a, adam_a, ts, src, cfg, 99);
  train_epoch(b, adam_b, ts, src, cfg, 99);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST(Train, EarlyStoppedTrainingLearnsSyntheticOrder) {
  auto cfg = small_city();
  cfg.n_regions = 6;
  cfg.clusters_per_region = 80;
  const auto city = synth::generate(cfg);
  const synth::SynthGridSource src(city);
  const auto clusters = synth::truth_clusters(city);
  const auto split = mining::split_by_cluster(clusters, 4);
  const auto all = mining::mine(clusters, mining::find_si("SI-2"));
  const auto tr = mining::select_split(all, split, mining::Split::train);
  const auto va = mining::select_split(all, split, mining::Split::val);
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 16;
  tc.max_epochs = 8;
  tc.patience_epochs = 3;
  std::size_t epochs = 0;
  const auto res = early_stop_train(model::ToyEncoder::random(16, 8, 3), tc, tr, va, src,
                                    [&](const EpochStats&) { ++epochs; });
  EXPECT_EQ(res.history.size(), epochs);
  EXPECT_GE(res.best_val_acc, 0.85);
  EXPECT_EQ(res.history[res.best_epoch - 1].val_acc, res.best_val_acc);
  EXPECT_NEAR(order_prediction(res.best, va, src).accuracy, res.best_val_acc, 1e-12);
}

TEST(Train, EpochLogAppends) {
  testing_support::TempDir dir;
  EpochStats s;
  s.epoch = 1;
  append_epoch_log(dir / "e.jsonl", s);
  s.epoch = 2;
  append_epoch_log(dir / "e.jsonl", s);
  std::ifstream in(dir / "e.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 2);
}
