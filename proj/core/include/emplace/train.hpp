#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emplace/grid_source.hpp"
#include "emplace/mining.hpp"
#include "emplace/model.hpp"
#include "emplace/optim.hpp"

namespace emplace::train {

struct TrainConfig {
  std::string si = "SI-2";
  std::size_t batch_size = 64;
  double lr = 1e-5;
  double clip = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t patience_epochs = 5;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  optim::MarginParams margin;
  bool cut_and_flip = true;

  void validate() const;
  optim::AdamConfig adam() const { return {lr, beta1, beta2, eps, clip}; }
};

struct EpochStats {
  std::size_t epoch = 0;  ///< 1-based
  double mean_loss = 0.0;    ///< mean cumulative (original + augmented) loss per triplet
  double active_frac = 0.0;  ///< fraction of forward passes with an active hinge
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  std::size_t triplets = 0;
  std::size_t skipped = 0;  ///< triplets referencing a missing grid
  std::size_t steps = 0;
  std::size_t clip_events = 0;
  std::size_t zero_distance_flags = 0;
};

/// One pass over `triplets` in a seeded shuffled order. Each triplet gets a
/// forward pass as-is and one with a shared patch-aligned cut-and-flip; the
/// gradient of the summed loss, averaged over the batch, goes to Adam.
EpochStats train_epoch(model::ToyEncoder& encoder, optim::Adam& adam,
                       const std::vector<mining::Triplet>& triplets, const model::GridSource& source,
                       const TrainConfig& cfg, std::uint64_t epoch_seed);

struct OrderResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t skipped = 0;
};

using ClsLookup = std::function<const std::vector<double>*(const std::string& image_id)>;

/// A triplet is correct iff |cls_pos - cls_anc| < |cls_neg - cls_anc| (ties
/// count as wrong). Throws DataError on an empty evaluable set.
OrderResult order_prediction(const std::vector<mining::Triplet>& triplets, const ClsLookup& cls_of);
OrderResult order_prediction(const model::Encoder& encoder, const std::vector<mining::Triplet>& triplets,
                             const model::GridSource& source);

/// Encodes every image referenced by `triplets` once and returns the cls vectors.
std::map<std::string, std::vector<double>> encode_cls(const model::Encoder& encoder,
                                                      const std::vector<mining::Triplet>& triplets,
                                                      const model::GridSource& source);

/// Patience-based stopping on a score that must strictly improve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's score; returns true when it is a new strict best.
  bool observe(double score);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }  ///< 1-based, 0 before any epoch
  double best_score() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct TrainResult {
  model::ToyEncoder best;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Trains until max_epochs or until validation order-prediction accuracy
/// has not strictly improved for patience_epochs, returning the best
/// parameters seen.
TrainResult early_stop_train(const model::ToyEncoder& init, const TrainConfig& cfg,
                             const std::vector<mining::Triplet>& train_triplets,
                             const std::vector<mining::Triplet>& val_triplets,
                             const model::GridSource& source,
                             const std::function<void(const EpochStats&)>& on_epoch = {});

void append_epoch_log(const std::filesystem::path& path, const EpochStats& stats);

}  // namespace emplace::train
