#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "mscib/eval.hpp"
#include "mscib/losses.hpp"
#include "mscib/model.hpp"
#include "mscib/network.hpp"

namespace mscib {

struct TrainConfig {
  int pretrain_epochs = 200;
  int train_epochs = 300;
  Eigen::Index batch_size = 256;  // clamped to N
  double pretrain_lr = 1e-3;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  LossConfig loss;
  int eval_every = 5;  // epochs between evaluations of Z; 0 disables
  int eval_runs = 10;
  int convergence_window = 10;
  double convergence_threshold = 1e-5;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based within the main phase
  LossBreakdown loss;
  std::optional<ClusterReport> eval;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> pretrain_rec;  // epoch-mean reconstruction loss during pretraining
  bool converged = false;
};

/// Called after every main-phase epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Pretraining on reconstruction, then joint optimisation of every network and Z.
///
/// The trainer owns the model, both optimiser states and the noise generator,
/// so a checkpoint taken between epochs resumes into exactly the run that
/// would have happened without interruption.
class Trainer {
 public:
  Trainer(MscibModel model, TrainConfig config);

  /// Runs the remaining pretraining epochs. Only encoders and decoders change.
  void pretrain(const MultiViewDataset& ds);

  /// Runs main-phase epochs until `train_epochs` (or `stop_after` total epochs,
  /// when given) or until the convergence window triggers.
  void train(const MultiViewDataset& ds, std::optional<int> stop_after = std::nullopt,
             const EpochCallback& on_epoch = {});

  const MscibModel& model() const noexcept { return model_; }
  const TrainHistory& history() const noexcept { return history_; }
  const TrainConfig& config() const noexcept { return config_; }
  int pretrain_epochs_done() const noexcept { return pretrain_done_; }
  int train_epochs_done() const noexcept { return train_done_; }

  void save(const std::filesystem::path& path) const;
  /// Restores model, optimiser and generator state; `config` supplies the run settings.
  static Trainer load(const std::filesystem::path& path, TrainConfig config);

  Archive to_archive() const;
  static Trainer from_archive(const Archive& archive, TrainConfig config);

 private:
  MscibModel model_;
  TrainConfig config_;
  AdamState pretrain_opt_;
  AdamState main_opt_;
  Rng rng_;
  int pretrain_done_ = 0;
  int train_done_ = 0;
  TrainHistory history_;
};

/// Pretrains a copy of `model` and returns it.
MscibModel pretrain(MscibModel model, const MultiViewDataset& ds, const TrainConfig& config);

/// Runs the main phase on an already pretrained model.
std::pair<MscibModel, TrainHistory> train(MscibModel model, const MultiViewDataset& ds,
                                          const TrainConfig& config);

/// Checkpoint helpers for a bare model (no optimiser state).
void save_model(const MscibModel& model, const std::filesystem::path& path);
MscibModel load_model(const std::filesystem::path& path);

}  // namespace mscib
