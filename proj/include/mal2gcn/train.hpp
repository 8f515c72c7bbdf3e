#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mal2gcn/fcg.hpp"
#include "mal2gcn/featurize.hpp"
#include "mal2gcn/gcn.hpp"
#include "mal2gcn/robustness.hpp"

namespace mal2gcn {

enum class ProjectionCadence { kPerEpoch, kPerStep };

struct AdversarialTraining {
  std::size_t count = 0;  // adversarial malware graphs added to the train set
  AttackConfig attack;    // overheads drawn from attack.overheads (non-zero entries)
  BenignPool pool;
};

struct TrainConfig {
  double learning_rate = 0.008;
  std::size_t batch_size = 32;
  std::size_t patience = 3;
  std::size_t max_epochs = 100;
  std::size_t h1 = 500;
  std::size_t h2 = 250;
  std::size_t hg = 64;
  Readout readout = Readout::kAvg;
  std::uint64_t seed = 0;
  bool nonneg_gcn = false;
  bool nonneg_gclf = false;
  std::optional<AdversarialTraining> adversarial_training;
  ProjectionCadence projection_cadence = ProjectionCadence::kPerEpoch;
  // Arithmetic for the training steps and per-epoch validation.
  Precision precision = Precision::kSingle;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

enum class StopReason { kEarlyStopping, kMaxEpochs };

std::string_view to_string(StopReason reason);

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::size_t adversarial_added = 0;
  // Smallest flag-governed weight of the returned model (+inf when no flag).
  double min_governed_weight = std::numeric_limits<double>::infinity();
  bool nonneg_audit_passed = true;
};

// Tracks validation loss; an epoch improves only on a strictly lower loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records one epoch's validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool last_improved() const { return last_improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool last_improved_ = false;
};

struct TrainResult {
  ModelParams model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Throws DataError on unusable corpora and TrainingError on a non-finite loss.
TrainResult train(const Corpus& train_set, const Corpus& val_set, const Vocabulary& vocab,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean loss and threshold-0.5 accuracy of a model over prepared samples.
std::pair<double, double> evaluate_samples(const ModelParams& m,
                                           const std::vector<GraphSample>& samples,
                                           Precision precision = Precision::kDouble);

}  // namespace mal2gcn
