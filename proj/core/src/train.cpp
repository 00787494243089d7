#include "emplace/train.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "emplace/error.hpp"
#include "emplace/rng.hpp"

namespace emplace::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience_epochs < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  margin.validate();
}

namespace {

struct Pass {
  model::ToyEncoder::Forward anc, pos, neg;
};

}  // namespace

EpochStats train_epoch(model::ToyEncoder& encoder, optim::Adam& adam,
                       const std::vector<mining::Triplet>& triplets, const model::GridSource& source,
                       const TrainConfig& cfg, std::uint64_t epoch_seed) {
  cfg.validate();
  EpochStats stats;
  std::vector<std::size_t> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng batch_rng(sub_seed(epoch_seed, "batch"));
  batch_rng.shuffle(order);
  Rng cut_rng(sub_seed(epoch_seed, "cut"));

  std::vector<double> grad(encoder.num_params(), 0.0);
  std::vector<double> scaled;
  double loss_sum = 0.0;
  std::size_t passes = 0;
  std::size_t active = 0;

  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<const mining::Triplet*> batch;
    std::vector<std::array<model::TokenGrid, 3>> grids;
    for (std::size_t k = start; k < end; ++k) {
      const auto& t = triplets[order[k]];
      auto a = source.load(t.anc);
      auto p = source.load(t.pos);
      auto n = source.load(t.neg);
      if (!a || !p || !n) {
        ++stats.skipped;
        continue;
      }
      batch.push_back(&t);
      grids.push_back({std::move(*a), std::move(*p), std::move(*n)});
    }
    if (batch.empty()) continue;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double alpha = optim::margin(batch[b]->d_pn, cfg.margin);
      const std::size_t grid_w = grids[b][0].patches.grid_w();
      // The cut is drawn per triplet even when augmentation is off so the
      // random stream does not depend on the flag.
      const auto cut = static_cast<std::ptrdiff_t>(cut_rng.index(std::max<std::size_t>(grid_w, 1)));
      double triplet_loss = 0.0;
      for (int variant = 0; variant < (cfg.cut_and_flip ? 2 : 1); ++variant) {
        std::array<model::VectorGrid, 3> feats;
        for (int r = 0; r < 3; ++r) {
          feats[r] = variant == 0 ? grids[b][r].patches : grids[b][r].patches.rotated_columns(cut);
        }
        const auto fa = encoder.forward(feats[0]);
        const auto fp = encoder.forward(feats[1]);
        const auto fn = encoder.forward(feats[2]);
        const auto tg = optim::triplet_loss_grad(fa.cls, fp.cls, fn.cls, alpha);
        ++passes;
        triplet_loss += tg.loss;
        if (tg.zero_pos_distance || tg.zero_neg_distance) ++stats.zero_distance_flags;
        if (!tg.active) continue;
        ++active;
        auto scale = [&](const std::vector<double>& g) {
          scaled.resize(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) scaled[i] = g[i] * inv_b;
          return std::span<const double>(scaled);
        };
        encoder.backward(feats[0], fa, scale(tg.d_anc), grad);
        encoder.backward(feats[1], fp, scale(tg.d_pos), grad);
        encoder.backward(feats[2], fn, scale(tg.d_neg), grad);
      }
      loss_sum += triplet_loss;
      ++stats.triplets;
    }
    const auto info = adam.step(encoder.params(), grad);
    ++stats.steps;
    if (info.clipped) ++stats.clip_events;
  }
  stats.mean_loss = stats.triplets ? loss_sum / static_cast<double>(stats.triplets) : 0.0;
  stats.active_frac = passes ? static_cast<double>(active) / static_cast<double>(passes) : 0.0;
  return stats;
}

OrderResult order_prediction(const std::vector<mining::Triplet>& triplets, const ClsLookup& cls_of) {
  OrderResult r;
  for (const auto& t : triplets) {
    const auto* a = cls_of(t.anc);
    const auto* p = cls_of(t.pos);
    const auto* n = cls_of(t.neg);
    if (!a || !p || !n) {
      ++r.skipped;
      continue;
    }
    double dp = 0.0;
    double dn = 0.0;
    for (std::size_t i = 0; i < a->size(); ++i) {
      dp += ((*p)[i] - (*a)[i]) * ((*p)[i] - (*a)[i]);
      dn += ((*n)[i] - (*a)[i]) * ((*n)[i] - (*a)[i]);
    }
    ++r.total;
    if (dp < dn) ++r.correct;
  }
  if (r.total == 0) throw DataError("order prediction needs at least one evaluable triplet");
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

std::map<std::string, std::vector<double>> encode_cls(const model::Encoder& encoder,
                                                      const std::vector<mining::Triplet>& triplets,
                                                      const model::GridSource& source) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& t : triplets) {
    for (const auto* id : {&t.anc, &t.pos, &t.neg}) {
      if (out.count(*id)) continue;
      auto g = source.load(*id);
      if (!g) continue;
      const auto tok = encoder.encode(*g);
      out[*id] = std::vector<double>(tok.cls.begin(), tok.cls.end());
    }
  }
  return out;
}

OrderResult order_prediction(const model::Encoder& encoder, const std::vector<mining::Triplet>& triplets,
                             const model::GridSource& source) {
  const auto cls = encode_cls(encoder, triplets, source);
  return order_prediction(triplets, [&](const std::string& id) -> const std::vector<double>* {
    auto it = cls.find(id);
    return it == cls.end() ? nullptr : &it->second;
  });
}

bool EarlyStopping::observe(double score) {
  ++epoch_;
  if (score > best_) {
    best_ = score;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

TrainResult early_stop_train(const model::ToyEncoder& init, const TrainConfig& cfg,
                             const std::vector<mining::Triplet>& train_triplets,
                             const std::vector<mining::Triplet>& val_triplets,
                             const model::GridSource& source,
                             const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  TrainResult result{init, {}, 0, 0.0};
  model::ToyEncoder current = init;
  optim::Adam adam(current.num_params(), cfg.adam());
  EarlyStopping stopper(cfg.patience_epochs);
  const std::uint64_t train_seed = sub_seed(cfg.seed, "train");
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochStats stats =
        train_epoch(current, adam, train_triplets, source, cfg, sub_seed(train_seed, std::to_string(epoch)));
    stats.epoch = epoch;
    stats.val_acc = order_prediction(current, val_triplets, source).accuracy;
    for (double p : current.params()) {
      if (!std::isfinite(p)) throw NumericalError("encoder parameters became non-finite");
    }
    if (stopper.observe(stats.val_acc)) {
      result.best = current;
      result.best_epoch = epoch;
      result.best_val_acc = stats.val_acc;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (stopper.should_stop()) break;
  }
  return result;
}

void append_epoch_log(const std::filesystem::path& path, const EpochStats& s) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + path.string());
  nlohmann::json j{{"epoch", s.epoch},
                   {"mean_loss", s.mean_loss},
                   {"active_frac", s.active_frac},
                   {"val_acc", std::isfinite(s.val_acc) ? nlohmann::json(s.val_acc) : nlohmann::json()},
                   {"triplets", s.triplets},
                   {"skipped", s.skipped},
                   {"steps", s.steps},
                   {"clip_events", s.clip_events},
                   {"zero_distance_flags", s.zero_distance_flags}};
  out << j.dump() << '\n';
}

}  // namespace emplace::train
