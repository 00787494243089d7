#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emplace/grid_source.hpp"
#include "emplace/model.hpp"

namespace emplace::train {

/// Two images of one location, `img_a` captured first, with a change label.
struct DiscretePair {
  std::string img_a;
  std::string img_b;
  bool change = false;
  std::string cluster_id;
};

std::vector<DiscretePair> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const std::vector<DiscretePair>& pairs);

struct PairSplits {
  std::vector<DiscretePair> train, val, test;
};
/// Seeded 70/20/10 split of the pairs (same policy as mining::split_ids).
PairSplits split_pairs(const std::vector<DiscretePair>& pairs, std::uint64_t seed);

/// Linear layer over concat(cls_a, cls_b) followed by a sigmoid. Parameters
/// are laid out as [w (2d) | b].
class DiscreteHead {
 public:
  explicit DiscreteHead(std::size_t cls_dim) : d_(cls_dim), theta_(2 * cls_dim + 1, 0.0) {}

  std::size_t cls_dim() const noexcept { return d_; }
  std::span<double> params() noexcept { return theta_; }
  std::span<const double> params() const noexcept { return theta_; }

  double logit(std::span<const double> cls_a, std::span<const double> cls_b) const;
  double probability(std::span<const double> cls_a, std::span<const double> cls_b) const;
  /// change iff probability > 0.5; exactly 0.5 predicts no-change.
  bool predict(std::span<const double> cls_a, std::span<const double> cls_b) const;

 private:
  std::size_t d_;
  std::vector<double> theta_;
};

void save_head(const DiscreteHead& head, const std::filesystem::path& path);
DiscreteHead load_head(const std::filesystem::path& path);

struct Metrics {
  double acc = 0.0;
  double prec = 0.0;
  double rec = 0.0;
  double f1 = 0.0;
  bool prec_undefined = false;  ///< no positive predictions
  bool rec_undefined = false;   ///< no positive labels
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Undefined precision/recall (zero denominator) is reported as 0 and flagged.
Metrics eval_metrics(const std::vector<bool>& preds, const std::vector<bool>& labels);

enum class FinetuneMode { head_only, full };

struct FinetuneConfig {
  double lr = 1e-5;
  std::size_t batch_size = 16;
  double clip = 0.5;
  std::size_t patience_epochs = 3;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  FinetuneMode mode = FinetuneMode::head_only;

  void validate() const;
};

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_acc = 0.0;
};

struct FinetuneResult {
  DiscreteHead head;
  std::optional<model::ToyEncoder> encoder;  ///< set in full mode
  std::vector<FinetuneEpoch> history;
  std::size_t best_epoch = 0;
  Metrics val;
  std::size_t skipped = 0;
};

/// Binary cross-entropy training of the head (and, in full mode, the toy
/// encoder) with Adam, clipping and early stopping on validation accuracy.
/// Full mode requires a ToyEncoder. Throws DataError when the training or
/// validation split holds a single class.
FinetuneResult finetune_discrete(const model::Encoder& encoder, const DiscreteHead& init,
                                 const std::vector<DiscretePair>& train_pairs,
                                 const std::vector<DiscretePair>& val_pairs,
                                 const model::GridSource& source, const FinetuneConfig& cfg);

/// Predictions for every pair whose images resolve; unresolved pairs are
/// dropped from both returned vectors.
struct PairPredictions {
  std::vector<bool> preds;
  std::vector<bool> labels;
  std::size_t skipped = 0;
};
PairPredictions predict_pairs(const model::Encoder& encoder, const DiscreteHead& head,
                              const std::vector<DiscretePair>& pairs, const model::GridSource& source);

}  // namespace emplace::train
