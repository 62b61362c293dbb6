#pragma once

// Experiment configuration and its JSON schema. Every object is parsed
// strictly: unknown keys and wrongly typed values raise InvalidConfig.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "updp/augment.hpp"
#include "updp/dataset.hpp"
#include "updp/evaluation.hpp"
#include "updp/selection.hpp"
#include "updp/trainer.hpp"

namespace updp {

struct DatasetSource {
  std::optional<std::filesystem::path> path;
  std::optional<SynthConfig> synth;
  /// True when the synth block gave no seed; resolve() then derives one from
  /// the run seed.
  bool synth_seed_from_run = true;
};

struct EvalSettings {
  std::optional<std::size_t> knn_k;
  ProbeConfig probe;
};

struct ExperimentConfig {
  DatasetSource dataset;
  std::uint64_t seed = 0;
  std::size_t budget = 200;
  std::vector<Strategy> strategies = {Strategy::Random, Strategy::Confidence,
                                      Strategy::MedoidFused, Strategy::MedoidInstance};
  TrainConfig train;
  AugmentPolicy augment;
  EvalSettings eval;
  std::filesystem::path output_dir = "out";
  /// Use this trained model instead of training (prompt-generalization runs).
  std::optional<std::filesystem::path> checkpoint;
  bool save_epoch_checkpoints = false;
};

/// Fills the seed-derived and budget-derived defaults: train.seed, the synth
/// seed when unset, and M = budget when train.model.num_clusters is 0.
ExperimentConfig resolve(ExperimentConfig cfg);

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

SynthConfig parse_synth_config(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& cfg);

std::string_view augment_kind_name(AugmentKind kind);

}  // namespace updp
