#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "mscib/dataset.hpp"
#include "mscib/eval.hpp"
#include "mscib/keyvalue.hpp"
#include "mscib/train.hpp"

namespace mscib {

/// Everything one CLI run needs, resolved from a dotted key-value file.
struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticSpec> synthetic;
  Normalization normalization = Normalization::kMinMax;

  Eigen::Index latent_dim = 64;
  Eigen::Index consistent_dim = 64;
  std::vector<Eigen::Index> hidden{256, 256};
  std::vector<Eigen::Index> head_hidden{64};
  int clusters = 0;  // 0: number of label classes

  TrainConfig train;
  KMeansOptions kmeans;
  int eval_runs = 10;

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "mscib_out";

  /// Applies a seed override to every seeded component.
  void set_seed(std::uint64_t s);
};

/// Relative paths resolve against `base_dir`. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const KeyValues& kv, const std::filesystem::path& base_dir = {});
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

/// Effective configuration with every default filled in. Feeding it back to
/// parse_experiment_config reproduces the run.
KeyValues resolved_config(const ExperimentConfig& config);

/// Hash of the resolved configuration, output directory excluded.
std::string config_hash(const ExperimentConfig& config);

/// Loads (or generates) and normalizes the configured dataset.
MultiViewDataset experiment_dataset(const ExperimentConfig& config);

ModelDims experiment_model_dims(const ExperimentConfig& config, const MultiViewDataset& ds);

/// Metrics JSON: one record per representation plus a "metadata" block.
std::string metrics_json(const AblationTable& table, const ExperimentConfig& config,
                         int pretrain_epochs, int train_epochs, bool early_stopped);

/// `epoch,rec,ib,sem,total[,acc,nmi,ari]`
std::string history_line(const EpochRecord& record);

struct TrainArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path history;
  std::optional<std::filesystem::path> metrics;
  TrainHistory train_history;
  std::optional<AblationTable> table;
};

/// Writes view_*.csv, labels.txt and manifest.txt for the synthetic section.
std::filesystem::path cmd_generate(const ExperimentConfig& config);

/// Pretrain + train; writes checkpoint.bin, history.csv, config.resolved.txt and,
/// with labels, metrics.json. Progress lines go to `log` when non-null.
TrainArtifacts cmd_train(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Ablation table for a checkpoint; writes eval_metrics.json.
std::filesystem::path cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// Writes an N x width embedding for "Z" or "Z^(m)".
std::filesystem::path cmd_embed(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                const std::string& which);

/// Maps exceptions to the CLI exit codes (2 config, 3 data, 4 numeric, 1 other).
int exit_code_for(const std::exception& e);

}  // namespace mscib
