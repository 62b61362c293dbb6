#pragma once

// The train -> assign -> select -> evaluate pipeline and its JSON outputs.

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "updp/config.hpp"
#include "updp/dataset.hpp"
#include "updp/evaluation.hpp"
#include "updp/model.hpp"
#include "updp/selection.hpp"
#include "updp/trainer.hpp"

namespace updp {

using AnyModel = std::variant<ModelState<float>, ModelState<double>>;

EmbeddingDataset materialize_dataset(const DatasetSource& source);

struct TrainedModel {
  AnyModel model;
  TrainHistory history;
};

/// Trains at the configured precision. With `checkpoint_dir`, writes
/// checkpoint_epoch_<e>.upck after every epoch.
TrainedModel train_model(const EmbeddingDataset& dataset, const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir = {});

AnyModel load_any_model(const std::filesystem::path& path, std::size_t d_in);
void save_any_model(const AnyModel& model, const std::filesystem::path& path);

/// Everything the selection strategies read from a trained model.
struct ModelView {
  Encoding<double> encoding;
  ClusterAssignment assignment;
};

ModelView view_model(const AnyModel& model, const EmbeddingDataset& dataset);

bool needs_model(Strategy strategy);

/// Runs one strategy. Throws InvalidConfig when the strategy needs a model and
/// none is given. Never reads labels.
SelectionResult run_strategy(Strategy strategy, const EmbeddingDataset& dataset,
                             const ModelView* model, std::size_t budget, std::uint64_t seed);

struct StrategyReport {
  std::optional<EvalReport> report;
  /// Reasons a metric could not be computed (e.g. single-class selection).
  std::vector<std::string> notes;
};

/// Labeled set = the selection; test set = every instance (view 0). The probe
/// and the raw KNN use the stored features; the fused KNN uses `fused`.
StrategyReport evaluate_selection(const EmbeddingDataset& dataset, const SelectionResult& sel,
                                  const DenseMatrix* fused, const EvalSettings& settings);

struct ExperimentResult {
  ExperimentConfig config;  // resolved
  std::optional<TrainHistory> history;
  std::optional<AnyModel> model;
  std::vector<SelectionResult> selections;
  std::vector<StrategyReport> reports;
};

/// Runs the full pipeline. With `write_outputs`, writes config.json,
/// history.json, checkpoint.upck, selection_<s>.json and report_<s>.json
/// into cfg.output_dir. Output bytes depend only on config and input files.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_outputs = true);

nlohmann::json to_json(const SelectionResult& sel);
SelectionResult selection_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StrategyReport& report, Strategy strategy);
nlohmann::json to_json(const TrainHistory& history);

void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace updp
