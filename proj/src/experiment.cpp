#include "updp/experiment.hpp"

#include <fstream>
#include <span>

#include "updp/checkpoint.hpp"
#include "updp/random.hpp"

namespace updp {

using nlohmann::json;

EmbeddingDataset materialize_dataset(const DatasetSource& source) {
  if (source.path) return load_dataset(*source.path);
  if (source.synth) return synth_generate(*source.synth);
  throw Error(ErrorCode::InvalidConfig, "dataset source has neither a path nor a synth config");
}

namespace {

template <typename Real>
TrainedModel train_as(const EmbeddingDataset& dataset, const ExperimentConfig& cfg,
                      const std::optional<std::filesystem::path>& checkpoint_dir) {
  EpochCallback<Real> on_epoch;
  if (checkpoint_dir) {
    on_epoch = [&](std::size_t epoch, const ModelState<Real>& model, const LossBreakdown&) {
      save_checkpoint(model,
                      *checkpoint_dir / ("checkpoint_epoch_" + std::to_string(epoch) + ".upck"));
    };
  }
  TrainResult<Real> result = train<Real>(dataset, cfg.train, cfg.augment, on_epoch);
  return TrainedModel{AnyModel(std::move(result.model)), std::move(result.history)};
}

std::span<const std::int32_t> labels_of(const EmbeddingDataset& dataset) {
  return {dataset.labels->data(), dataset.labels->size()};
}

std::vector<std::int32_t> gather_labels(const EmbeddingDataset& dataset,
                                        std::span<const std::size_t> indices) {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (const std::size_t i : indices) out.push_back((*dataset.labels)[i]);
  return out;
}

DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::size_t> indices) {
  DenseMatrix out(indices.size(), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = m.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

TrainedModel train_model(const EmbeddingDataset& dataset, const ExperimentConfig& cfg,
                         const std::optional<std::filesystem::path>& checkpoint_dir) {
  if (cfg.train.precision == Precision::F64) return train_as<double>(dataset, cfg, checkpoint_dir);
  return train_as<float>(dataset, cfg, checkpoint_dir);
}

AnyModel load_any_model(const std::filesystem::path& path, std::size_t d_in) {
  if (checkpoint_precision(path) == Precision::F64) return load_checkpoint<double>(path, d_in);
  return load_checkpoint<float>(path, d_in);
}

void save_any_model(const AnyModel& model, const std::filesystem::path& path) {
  std::visit([&](const auto& m) { save_checkpoint(m, path); }, model);
}

ModelView view_model(const AnyModel& model, const EmbeddingDataset& dataset) {
  return std::visit(
      [&](const auto& m) {
        Encoding<double> enc = encode_dataset(m, dataset);
        ClusterAssignment assignment = assignment_from_soft(enc.c);
        return ModelView{std::move(enc), std::move(assignment)};
      },
      model);
}

bool needs_model(Strategy strategy) {
  return strategy != Strategy::Random && strategy != Strategy::KMeansMedoid;
}

SelectionResult run_strategy(Strategy strategy, const EmbeddingDataset& dataset,
                             const ModelView* model, std::size_t budget, std::uint64_t seed) {
  if (needs_model(strategy) && model == nullptr) {
    throw Error(ErrorCode::InvalidConfig,
                std::string("strategy ") + std::string(strategy_name(strategy)) +
                    " needs a trained model");
  }
  switch (strategy) {
    case Strategy::Random:
      return select_random(dataset.count, budget, seed);
    case Strategy::Confidence:
      return select_confidence(model->assignment, budget);
    case Strategy::MedoidFused:
      return select_medoid(model->encoding.h, model->assignment, budget, Strategy::MedoidFused);
    case Strategy::MedoidInstance:
      return select_medoid(model->encoding.z, model->assignment, budget, Strategy::MedoidInstance);
    case Strategy::KMeansMedoid:
      return select_kmeans_medoid(dataset.view_matrix<double>(0), budget, seed,
                                  Strategy::KMeansMedoid);
    case Strategy::KMeansMedoidFused:
      return select_kmeans_medoid(model->encoding.h, budget, seed, Strategy::KMeansMedoidFused);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown strategy");
}

StrategyReport evaluate_selection(const EmbeddingDataset& dataset, const SelectionResult& sel,
                                  const DenseMatrix* fused, const EvalSettings& settings) {
  StrategyReport out;
  if (!dataset.has_labels()) {
    out.notes.emplace_back("dataset has no labels; evaluation skipped");
    return out;
  }
  const DenseMatrix features = dataset.view_matrix<double>(0);
  const auto all_labels = labels_of(dataset);
  const std::vector<std::int32_t> picked = gather_labels(dataset, sel.indices);

  EvalReport report;
  report.knn_k = settings.knn_k.value_or(default_knn_k(sel.indices.size()));
  report.knn_accuracy =
      knn_accuracy(gather_rows(features, sel.indices), picked, features, all_labels, report.knn_k);
  if (fused != nullptr) {
    report.knn_accuracy_fused =
        knn_accuracy(gather_rows(*fused, sel.indices), picked, *fused, all_labels, report.knn_k);
  }
  try {
    report.probe_accuracy =
        linear_probe(gather_rows(features, sel.indices), picked, features, all_labels,
                     settings.probe);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingleClass) throw;
    out.notes.emplace_back(std::string("linear probe skipped: ") + e.what());
  }
  report.kl_balance = kl_balance(picked, dataset.num_classes);
  report.class_coverage = class_coverage(picked, dataset.num_classes);
  report.class_counts = class_counts(picked, dataset.num_classes);
  out.report = std::move(report);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& raw_cfg, bool write_outputs) {
  ExperimentResult result;
  result.config = resolve(raw_cfg);
  const ExperimentConfig& cfg = result.config;
  const EmbeddingDataset dataset = materialize_dataset(cfg.dataset);
  if (cfg.budget > dataset.count) {
    throw Error(ErrorCode::BudgetExceedsDataset, "budget " + std::to_string(cfg.budget) +
                                                     " exceeds dataset size " +
                                                     std::to_string(dataset.count));
  }
  if (write_outputs) std::filesystem::create_directories(cfg.output_dir);

  bool any_model_strategy = false;
  for (const Strategy s : cfg.strategies) any_model_strategy = any_model_strategy || needs_model(s);

  if (cfg.checkpoint) {
    result.model = load_any_model(*cfg.checkpoint, dataset.dim);
  } else if (any_model_strategy) {
    std::optional<std::filesystem::path> epoch_dir;
    if (write_outputs && cfg.save_epoch_checkpoints) epoch_dir = cfg.output_dir;
    TrainedModel trained = train_model(dataset, cfg, epoch_dir);
    result.model = std::move(trained.model);
    result.history = std::move(trained.history);
  }

  std::optional<ModelView> view;
  if (result.model) view = view_model(*result.model, dataset);
  const ModelView* view_ptr = view ? &*view : nullptr;
  const DenseMatrix* fused = view ? &view->encoding.h : nullptr;
  const std::uint64_t baseline_seed = derive_seed(cfg.seed, "baseline");

  for (const Strategy s : cfg.strategies) {
    SelectionResult sel = run_strategy(s, dataset, view_ptr, cfg.budget, baseline_seed);
    result.reports.push_back(evaluate_selection(dataset, sel, fused, cfg.eval));
    result.selections.push_back(std::move(sel));
  }

  if (write_outputs) {
    write_json(to_json(cfg), cfg.output_dir / "config.json");
    if (result.history) write_json(to_json(*result.history), cfg.output_dir / "history.json");
    if (result.model && !cfg.checkpoint) {
      save_any_model(*result.model, cfg.output_dir / "checkpoint.upck");
    }
    for (std::size_t i = 0; i < result.selections.size(); ++i) {
      const std::string name(strategy_name(result.selections[i].strategy));
      write_json(to_json(result.selections[i]), cfg.output_dir / ("selection_" + name + ".json"));
      write_json(to_json(result.reports[i], result.selections[i].strategy),
                 cfg.output_dir / ("report_" + name + ".json"));
    }
  }
  return result;
}

json to_json(const SelectionResult& sel) {
  json provenance = json::array();
  for (const Provenance& p : sel.provenance) {
    provenance.push_back({{"strategy", strategy_name(p.strategy)},
                          {"cluster_id", p.cluster_id ? json(*p.cluster_id) : json(nullptr)},
                          {"score", p.score}});
  }
  return json{{"strategy", strategy_name(sel.strategy)},
              {"budget", sel.budget},
              {"indices", sel.indices},
              {"provenance", provenance}};
}

SelectionResult selection_from_json(const json& doc) {
  try {
    SelectionResult sel;
    sel.strategy = parse_strategy(doc.at("strategy").get<std::string>());
    sel.budget = doc.at("budget").get<std::size_t>();
    sel.indices = doc.at("indices").get<std::vector<std::size_t>>();
    for (const json& p : doc.at("provenance")) {
      Provenance prov;
      prov.strategy = parse_strategy(p.at("strategy").get<std::string>());
      if (!p.at("cluster_id").is_null()) prov.cluster_id = p.at("cluster_id").get<std::size_t>();
      prov.score = p.at("score").get<double>();
      sel.provenance.push_back(prov);
    }
    if (sel.provenance.size() != sel.indices.size()) {
      throw Error(ErrorCode::InvalidConfig, "selection provenance and indices differ in length");
    }
    return sel;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed selection file: ") + e.what());
  }
}

json to_json(const StrategyReport& report, Strategy strategy) {
  json doc{{"strategy", strategy_name(strategy)}, {"evaluated", report.report.has_value()}};
  if (report.report) {
    const EvalReport& r = *report.report;
    doc["knn_k"] = r.knn_k;
    doc["knn_accuracy"] = r.knn_accuracy;
    doc["knn_accuracy_fused"] = optional_number(r.knn_accuracy_fused);
    doc["probe_accuracy"] = optional_number(r.probe_accuracy);
    doc["kl_balance"] = r.kl_balance;
    doc["class_coverage"] = r.class_coverage;
    doc["class_counts"] = r.class_counts;
  }
  doc["notes"] = report.notes;
  return doc;
}

json to_json(const TrainHistory& history) {
  json epochs = json::array();
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const LossBreakdown& l = history.epochs[e];
    epochs.push_back({{"epoch", e},
                      {"l_instance", l.l_instance},
                      {"l_cluster_contrastive", l.l_cluster_contrastive},
                      {"entropy", l.entropy},
                      {"l_cluster", l.l_cluster},
                      {"total", l.total}});
  }
  return json{{"epochs", epochs}, {"final_checksum", history.final_checksum}};
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace updp
