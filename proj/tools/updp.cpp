// Command-line front end: synth, train, select, eval, run and gradcheck.
// Every subcommand exits 0 on success; failures print one JSON object
// {"error": <code>, "message": <text>} to stderr and exit 1 (2 for usage).

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "updp/checkpoint.hpp"
#include "updp/config.hpp"
#include "updp/experiment.hpp"
#include "updp/gradcheck.hpp"
#include "updp/random.hpp"

namespace {

using nlohmann::json;
using namespace updp;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategies;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_strategy, bool with_checkpoint) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Top-level seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output directory (overrides the config)");
  if (with_strategy) {
    cmd->add_option("--strategy", f.strategies, "Comma-separated strategy names");
  }
  if (with_checkpoint) {
    cmd->add_option("--checkpoint", f.checkpoint, "Trained model to use instead of training");
  }
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config.empty()) {
    cfg = load_experiment_config(f.config);
  } else {
    cfg.dataset.synth = SynthConfig{};
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  if (!f.strategies.empty()) {
    cfg.strategies.clear();
    std::stringstream ss(f.strategies);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) cfg.strategies.push_back(parse_strategy(name));
    }
    if (cfg.strategies.empty()) throw Error(ErrorCode::InvalidConfig, "--strategy is empty");
  }
  return resolve(cfg);
}

void print(const json& doc) { std::cout << doc.dump(2) << '\n'; }

void fail(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
}

int cmd_synth(const CommonFlags& f, bool strip_labels) {
  ExperimentConfig cfg = build_config(f);
  if (!cfg.dataset.synth) {
    throw Error(ErrorCode::InvalidConfig, "synth needs a config whose dataset is a synth block");
  }
  EmbeddingDataset ds = synth_generate(*cfg.dataset.synth);
  if (strip_labels) {
    ds.labels.reset();
    ds.num_classes = 0;
  }
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = cfg.output_dir / "dataset.emb";
  save_dataset(ds, path);
  print({{"dataset", path.generic_string()},
         {"count", ds.count},
         {"dim", ds.dim},
         {"views", ds.views},
         {"num_classes", ds.num_classes}});
  return 0;
}

int cmd_train(const CommonFlags& f) {
  const ExperimentConfig cfg = build_config(f);
  const EmbeddingDataset ds = materialize_dataset(cfg.dataset);
  std::filesystem::create_directories(cfg.output_dir);
  std::optional<std::filesystem::path> epoch_dir;
  if (cfg.save_epoch_checkpoints) epoch_dir = cfg.output_dir;
  const TrainedModel trained = train_model(ds, cfg, epoch_dir);
  save_any_model(trained.model, cfg.output_dir / "checkpoint.upck");
  write_json(to_json(trained.history), cfg.output_dir / "history.json");
  write_json(to_json(cfg), cfg.output_dir / "config.json");
  print({{"checkpoint", (cfg.output_dir / "checkpoint.upck").generic_string()},
         {"epochs", trained.history.epochs.size()},
         {"final_total", trained.history.epochs.empty() ? json(nullptr)
                                                        : json(trained.history.epochs.back().total)},
         {"final_checksum", trained.history.final_checksum}});
  return 0;
}

std::optional<ModelView> maybe_view(const ExperimentConfig& cfg, const EmbeddingDataset& ds) {
  if (!cfg.checkpoint) return std::nullopt;
  return view_model(load_any_model(*cfg.checkpoint, ds.dim), ds);
}

int cmd_select(const CommonFlags& f) {
  const ExperimentConfig cfg = build_config(f);
  const EmbeddingDataset ds = materialize_dataset(cfg.dataset);
  if (cfg.budget > ds.count) {
    throw Error(ErrorCode::BudgetExceedsDataset, "budget exceeds dataset size");
  }
  const std::optional<ModelView> view = maybe_view(cfg, ds);
  std::filesystem::create_directories(cfg.output_dir);
  json written = json::array();
  for (const Strategy s : cfg.strategies) {
    const SelectionResult sel = run_strategy(s, ds, view ? &*view : nullptr, cfg.budget,
                                             derive_seed(cfg.seed, "baseline"));
    const auto path = cfg.output_dir / ("selection_" + std::string(strategy_name(s)) + ".json");
    write_json(to_json(sel), path);
    written.push_back(path.generic_string());
  }
  print({{"selections", written}});
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::vector<std::string>& selection_files) {
  const ExperimentConfig cfg = build_config(f);
  const EmbeddingDataset ds = materialize_dataset(cfg.dataset);
  const std::optional<ModelView> view = maybe_view(cfg, ds);
  std::vector<std::filesystem::path> files(selection_files.begin(), selection_files.end());
  if (files.empty()) {
    for (const Strategy s : cfg.strategies) {
      files.push_back(cfg.output_dir / ("selection_" + std::string(strategy_name(s)) + ".json"));
    }
  }
  std::filesystem::create_directories(cfg.output_dir);
  json reports = json::array();
  for (const auto& file : files) {
    const SelectionResult sel = selection_from_json(read_json(file));
    for (const std::size_t i : sel.indices) {
      if (i >= ds.count) throw Error(ErrorCode::InvalidConfig, "selection index out of range");
    }
    const StrategyReport report =
        evaluate_selection(ds, sel, view ? &view->encoding.h : nullptr, cfg.eval);
    const json doc = to_json(report, sel.strategy);
    write_json(doc, cfg.output_dir / ("report_" + std::string(strategy_name(sel.strategy)) + ".json"));
    reports.push_back(doc);
  }
  print(reports);
  return 0;
}

int cmd_run(const CommonFlags& f) {
  const ExperimentResult result = run_experiment(build_config(f));
  json summary = json::array();
  for (std::size_t i = 0; i < result.selections.size(); ++i) {
    summary.push_back(to_json(result.reports[i], result.selections[i].strategy));
  }
  print({{"output_dir", result.config.output_dir.generic_string()}, {"reports", summary}});
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t cases, double eps, double tolerance) {
  const GradientSuiteReport suite = run_gradient_suite(seed, cases, eps, tolerance);
  json detail = json::array();
  for (const GradientCase& c : suite.cases) {
    detail.push_back({{"n", c.batch},
                      {"m", c.model.num_clusters},
                      {"exclude_self", c.loss.exclude_self},
                      {"max_relative_error", c.report.max_relative_error}});
  }
  print({{"passed", suite.passed()},
         {"max_relative_error", suite.max_relative_error},
         {"tolerance", suite.tolerance},
         {"cases", detail}});
  if (!suite.passed()) {
    fail("GradientCheckFailed", "max relative error " + std::to_string(suite.max_relative_error));
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised prompt learning and budgeted data pre-selection"};
  app.require_subcommand(1);

  CommonFlags synth_f, train_f, select_f, eval_f, run_f;
  bool strip_labels = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic EMB1 dataset");
  add_common(synth, synth_f, false, false);
  synth->add_flag("--no-labels", strip_labels, "Omit the labels block");

  auto* train_cmd = app.add_subcommand("train", "Train prompt and heads, write a checkpoint");
  add_common(train_cmd, train_f, false, false);

  auto* select = app.add_subcommand("select", "Run selection strategies");
  add_common(select, select_f, true, true);

  std::vector<std::string> selection_files;
  auto* eval = app.add_subcommand("eval", "Evaluate selection files");
  add_common(eval, eval_f, true, true);
  eval->add_option("--selection", selection_files, "Selection JSON files")
      ->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Full pipeline: train, select, evaluate");
  add_common(run, run_f, true, true);

  std::uint64_t grad_seed = 0;
  std::size_t grad_cases = 20;
  double grad_eps = 1e-6;
  double grad_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", grad_seed, "Seed for the random configurations");
  gradcheck->add_option("--cases", grad_cases, "Number of configurations");
  gradcheck->add_option("--eps", grad_eps, "Finite-difference step");
  gradcheck->add_option("--tolerance", grad_tol, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("UsageError", e.what());
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_f, strip_labels);
    if (train_cmd->parsed()) return cmd_train(train_f);
    if (select->parsed()) return cmd_select(select_f);
    if (eval->parsed()) return cmd_eval(eval_f, selection_files);
    if (run->parsed()) return cmd_run(run_f);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_seed, grad_cases, grad_eps, grad_tol);
  } catch (const Error& e) {
    fail(std::string(to_string(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    fail("InternalError", e.what());
    return 1;
  }
  return 1;
}
