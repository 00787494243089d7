#include "emplace/discrete.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "emplace/error.hpp"
#include "emplace/optim.hpp"
#include "emplace/rng.hpp"
#include "emplace/train.hpp"

namespace emplace::train {

std::vector<DiscretePair> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<DiscretePair> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected img_a,img_b,label");
    DiscretePair p;
    p.img_a = f[0];
    p.img_b = f[1];
    if (f[2] == "change" || f[2] == "1") {
      p.change = true;
    } else if (f[2] == "no-change" || f[2] == "0") {
      p.change = false;
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown label '" + f[2] + "'");
    }
    if (f.size() > 3) p.cluster_id = f[3];
    out.push_back(std::move(p));
  }
  return out;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<DiscretePair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "img_a,img_b,label,cluster_id\n";
  for (const auto& p : pairs) {
    out << p.img_a << ',' << p.img_b << ',' << (p.change ? "change" : "no-change") << ',' << p.cluster_id
        << '\n';
  }
}

PairSplits split_pairs(const std::vector<DiscretePair>& pairs, std::uint64_t seed) {
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t n = idx.size();
  const std::size_t n_val = n * 20 / 100;
  const std::size_t n_test = n * 10 / 100;
  const std::size_t n_train = n - n_val - n_test;
  PairSplits s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    dst.push_back(pairs[idx[i]]);
  }
  return s;
}

double DiscreteHead::logit(std::span<const double> a, std::span<const double> b) const {
  if (a.size() != d_ || b.size() != d_) throw DataError("cls dimension does not match the head");
  double z = theta_[2 * d_];
  for (std::size_t i = 0; i < d_; ++i) z += theta_[i] * a[i] + theta_[d_ + i] * b[i];
  return z;
}

double DiscreteHead::probability(std::span<const double> a, std::span<const double> b) const {
  return 1.0 / (1.0 + std::exp(-logit(a, b)));
}

bool DiscreteHead::predict(std::span<const double> a, std::span<const double> b) const {
  return probability(a, b) > 0.5;
}

void save_head(const DiscreteHead& head, const std::filesystem::path& path) {
  model::Checkpoint c;
  c.kind = model::CheckpointKind::discrete_head;
  c.shape = {static_cast<std::uint32_t>(head.cls_dim())};
  c.values.assign(head.params().begin(), head.params().end());
  model::save_checkpoint(c, path);
}

DiscreteHead load_head(const std::filesystem::path& path) {
  const auto c = model::load_checkpoint(path);
  if (c.kind != model::CheckpointKind::discrete_head || c.shape.size() != 1 ||
      c.values.size() != 2 * c.shape[0] + 1) {
    throw model::GridFileError(model::GridFileErrc::shape_mismatch, path.string() + ": not a head checkpoint");
  }
  DiscreteHead h(c.shape[0]);
  std::copy(c.values.begin(), c.values.end(), h.params().begin());
  return h;
}

Metrics eval_metrics(const std::vector<bool>& preds, const std::vector<bool>& labels) {
  if (preds.size() != labels.size()) throw DataError("predictions and labels differ in length");
  Metrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] && labels[i]) ++m.tp;
    else if (preds[i] && !labels[i]) ++m.fp;
    else if (!preds[i] && labels[i]) ++m.fn;
    else ++m.tn;
  }
  const double n = static_cast<double>(preds.size());
  m.acc = n > 0 ? static_cast<double>(m.tp + m.tn) / n : 0.0;
  m.prec_undefined = m.tp + m.fp == 0;
  m.rec_undefined = m.tp + m.fn == 0;
  m.prec = m.prec_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  m.rec = m.rec_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.f1 = m.prec + m.rec > 0.0 ? 2.0 * m.prec * m.rec / (m.prec + m.rec) : 0.0;
  return m;
}

void FinetuneConfig::validate() const {
  if (batch_size < 1) throw ConfigError("finetune batch_size must be at least 1");
  if (patience_epochs < 1) throw ConfigError("finetune patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("finetune max_epochs must be at least 1");
  if (!(lr >= 0.0)) throw ConfigError("finetune learning rate must be non-negative");
}

namespace {

struct ResolvedPair {
  model::TokenGrid a, b;
  bool change;
};

std::vector<ResolvedPair> resolve(const std::vector<DiscretePair>& pairs, const model::GridSource& source,
                                  std::size_t& skipped) {
  std::vector<ResolvedPair> out;
  for (const auto& p : pairs) {
    auto a = source.load(p.img_a);
    auto b = source.load(p.img_b);
    if (!a || !b) {
      ++skipped;
      continue;
    }
    out.push_back({std::move(*a), std::move(*b), p.change});
  }
  return out;
}

void require_both_classes(const std::vector<ResolvedPair>& pairs, const char* which) {
  bool pos = false, neg = false;
  for (const auto& p : pairs) (p.change ? pos : neg) = true;
  if (!pos || !neg) {
    throw DataError(std::string("the ") + which + " split holds a single class; cannot fine-tune");
  }
}

std::vector<double> cls_of(const model::Encoder& enc, const model::TokenGrid& g) {
  const auto t = enc.encode(g);
  return {t.cls.begin(), t.cls.end()};
}

/// Numerically stable binary cross-entropy on a logit.
double bce(double z, bool y) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return y ? softplus - z : softplus;
}

}  // namespace

FinetuneResult finetune_discrete(const model::Encoder& encoder, const DiscreteHead& init,
                                 const std::vector<DiscretePair>& train_pairs,
                                 const std::vector<DiscretePair>& val_pairs,
                                 const model::GridSource& source, const FinetuneConfig& cfg) {
  cfg.validate();
  const auto* toy = dynamic_cast<const model::ToyEncoder*>(&encoder);
  if (cfg.mode == FinetuneMode::full && !toy) {
    throw ConfigError("full fine-tuning needs a trainable toy encoder");
  }
  FinetuneResult result{init, std::nullopt, {}, 0, {}, 0};
  auto train = resolve(train_pairs, source, result.skipped);
  auto val = resolve(val_pairs, source, result.skipped);
  require_both_classes(train, "training");
  require_both_classes(val, "validation");

  DiscreteHead head = init;
  std::optional<model::ToyEncoder> enc;
  if (cfg.mode == FinetuneMode::full) enc = *toy;
  const model::Encoder& live = enc ? static_cast<const model::Encoder&>(*enc) : encoder;

  // Head-only training sees a frozen encoder, so cls vectors are computed once.
  std::vector<std::array<std::vector<double>, 2>> frozen;
  if (!enc) {
    for (const auto& p : train) frozen.push_back({cls_of(encoder, p.a), cls_of(encoder, p.b)});
  }

  optim::Adam head_opt(head.params().size(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.clip});
  std::optional<optim::Adam> enc_opt;
  if (enc) enc_opt.emplace(enc->num_params(), optim::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip});

  auto validate_acc = [&](const model::Encoder& e, const DiscreteHead& h) {
    std::vector<bool> preds, labels;
    for (const auto& p : val) {
      preds.push_back(h.predict(cls_of(e, p.a), cls_of(e, p.b)));
      labels.push_back(p.change);
    }
    return eval_metrics(preds, labels);
  };

  EarlyStopping stopper(cfg.patience_epochs);
  const std::size_t d = head.cls_dim();
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(sub_seed(cfg.seed, "finetune"));
  std::vector<double> g_head(head.params().size());
  std::vector<double> g_enc(enc ? enc->num_params() : 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      std::fill(g_head.begin(), g_head.end(), 0.0);
      std::fill(g_enc.begin(), g_enc.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = train[order[k]];
        model::ToyEncoder::Forward fa, fb;
        std::vector<double> ca, cb;
        if (enc) {
          fa = enc->forward(p.a.patches);
          fb = enc->forward(p.b.patches);
          ca = fa.cls;
          cb = fb.cls;
        } else {
          ca = frozen[order[k]][0];
          cb = frozen[order[k]][1];
        }
        const double z = head.logit(ca, cb);
        loss_sum += bce(z, p.change);
        const double dz = (1.0 / (1.0 + std::exp(-z)) - (p.change ? 1.0 : 0.0)) * inv_b;
        const auto w = head.params();
        for (std::size_t i = 0; i < d; ++i) {
          g_head[i] += dz * ca[i];
          g_head[d + i] += dz * cb[i];
        }
        g_head[2 * d] += dz;
        if (enc) {
          std::vector<double> ga(d), gb(d);
          for (std::size_t i = 0; i < d; ++i) {
            ga[i] = dz * w[i];
            gb[i] = dz * w[d + i];
          }
          enc->backward(p.a.patches, fa, ga, g_enc);
          enc->backward(p.b.patches, fb, gb, g_enc);
        }
      }
      head_opt.step(head.params(), g_head);
      if (enc) enc_opt->step(enc->params(), g_enc);
    }
    const Metrics vm = validate_acc(live, head);
    result.history.push_back({epoch, loss_sum / static_cast<double>(train.size()), vm.acc});
    if (stopper.observe(vm.acc)) {
      result.head = head;
      if (enc) result.encoder = *enc;
      result.best_epoch = epoch;
      result.val = vm;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

PairPredictions predict_pairs(const model::Encoder& encoder, const DiscreteHead& head,
                              const std::vector<DiscretePair>& pairs, const model::GridSource& source) {
  PairPredictions out;
  for (const auto& p : pairs) {
    auto a = source.load(p.img_a);
    auto b = source.load(p.img_b);
    if (!a || !b) {
      ++out.skipped;
      continue;
    }
    out.preds.push_back(head.predict(cls_of(encoder, *a), cls_of(encoder, *b)));
    out.labels.push_back(p.change);
  }
  return out;
}

}  // namespace emplace::train
