#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "updp/checkpoint.hpp"
#include "updp/config.hpp"
#include "updp/dataset.hpp"
#include "updp/experiment.hpp"

using namespace updp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("updp_pipeline_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

ExperimentConfig small_experiment(const fs::path& out) {
  ExperimentConfig cfg;
  SynthConfig s;
  s.num_classes = 4;
  s.per_class = 15;
  s.dim = 8;
  s.seed = 3;
  cfg.dataset.synth = s;
  cfg.dataset.synth_seed_from_run = false;
  cfg.seed = 11;
  cfg.budget = 8;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 16;
  cfg.train.model.d_w = 4;
  cfg.train.model.d_h = 8;
  cfg.train.model.d_z = 6;
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST(Emb1, SmallRoundTripIsBitExact) {
  EmbeddingDataset ds;
  ds.count = 2;
  ds.dim = 3;
  ds.views = 1;
  ds.features = {1.5f, -2.0f, 0.1f, 3.0f, 1e-30f, -0.0f};
  const fs::path p = scratch("emb") / "small.emb";
  save_dataset(ds, p);
  const EmbeddingDataset back = load_dataset(p);
  EXPECT_EQ(back, ds);
  EXPECT_FALSE(back.has_labels());
  EXPECT_EQ(fs::file_size(p), 4u + 4 + 4 + 4 + 1 + 4 + 6 * 4);
}

TEST(Emb1, SynthRoundTripWithLabels) {
  SynthConfig s;
  s.num_classes = 3;
  s.per_class = 7;
  s.dim = 5;
  s.views = 3;
  const EmbeddingDataset ds = synth_generate(s);
  EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds);
}

TEST(Emb1, Rejections) {
  EmbeddingDataset ds;
  ds.count = 1;
  ds.dim = 2;
  ds.features = {1.0f, std::numeric_limits<float>::quiet_NaN()};
  EXPECT_EQ(code_of([&] { encode_dataset(ds); }), ErrorCode::NonFiniteFeature);

  ds.features = {1.0f, 2.0f};
  const std::vector<std::uint8_t> bytes = encode_dataset(ds);
  std::vector<std::uint8_t> bad = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + 21 + 4, &nan, 4);  // second feature, after the 21-byte header
  EXPECT_EQ(code_of([&] { decode_dataset(bad); }), ErrorCode::NonFiniteFeature);
  bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_dataset(bad); }), ErrorCode::BadMagic);
  bad = bytes;
  bad.pop_back();
  EXPECT_EQ(code_of([&] { decode_dataset(bad); }), ErrorCode::TruncatedFile);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_dataset(bad), Error);

  ds.labels = std::vector<std::int32_t>{3};
  ds.num_classes = 2;
  EXPECT_EQ(code_of([&] { ds.validate(); }), ErrorCode::LabelOutOfRange);

  EmbeddingDataset no_views;
  no_views.count = 0;
  no_views.dim = 2;
  no_views.views = 0;
  EXPECT_EQ(code_of([&] { save_dataset(no_views, scratch("v0") / "x.emb"); }), ErrorCode::InvalidDim);
  EXPECT_EQ(code_of([] { load_dataset("/nonexistent/updp.emb"); }), ErrorCode::IoError);
}

TEST(Emb1, EmptyDatasetIsValid) {
  EmbeddingDataset ds;
  ds.count = 0;
  ds.dim = 4;
  ds.views = 2;
  const fs::path p = scratch("empty") / "empty.emb";
  save_dataset(ds, p);
  EXPECT_EQ(load_dataset(p), ds);
}

TEST(Synth, DeterministicAndClassOrdered) {
  SynthConfig s;
  s.num_classes = 3;
  s.per_class = 4;
  s.dim = 6;
  s.seed = 9;
  const EmbeddingDataset a = synth_generate(s);
  EXPECT_EQ(synth_generate(s), a);
  ++s.seed;
  EXPECT_NE(synth_generate(s).features, a.features);
  EXPECT_EQ(*a.labels, (std::vector<std::int32_t>{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}));
  EXPECT_EQ(a.num_classes, 3u);
  s.num_classes = 0;
  EXPECT_EQ(code_of([&] { synth_generate(s); }), ErrorCode::InvalidConfig);
}

TEST(Synth, LeaveOneOutNearestNeighbor) {
  SynthConfig s;  // K=10, 200/class, D=32, separation 10, sigma 1
  const EmbeddingDataset ds = synth_generate(s);
  const DenseMatrix unit = l2_normalize_rows(ds.view_matrix<double>(0));
  const DenseMatrix sims = matmul_bt(unit, unit);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.count; ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < ds.count; ++j)
      if (j != i && sims(i, j) > sims(i, best)) best = j;
    correct += (*ds.labels)[best] == (*ds.labels)[i];
  }
  EXPECT_GT(static_cast<double>(correct) / ds.count, 0.99);
}

TEST(Checkpoint, RoundTripForwardIsBitIdentical) {
  ModelConfig m;
  m.d_in = 5;
  m.d_w = 4;
  m.d_h = 6;
  m.d_z = 3;
  m.d_hidden = 6;
  m.context_length = 3;
  m.num_clusters = 4;
  const fs::path dir = scratch("ckpt");
  Rng rng(1);
  const DenseMatrix x = oracle::random_matrix(rng, 4, 5);

  const auto md = init_model<double>(m, 2);
  save_checkpoint(md, dir / "d.upck");
  const auto bd = load_checkpoint<double>(dir / "d.upck");
  EXPECT_EQ(bd, md);
  EXPECT_EQ(encode(bd, x).c, encode(md, x).c);
  EXPECT_EQ(checkpoint_precision(dir / "d.upck"), Precision::F64);

  const auto mf = init_model<float>(m, 2);
  save_checkpoint(mf, dir / "f.upck");
  EXPECT_EQ(load_checkpoint<float>(dir / "f.upck"), mf);
  EXPECT_EQ(checkpoint_precision(dir / "f.upck"), Precision::F32);

  EXPECT_EQ(code_of([&] { load_checkpoint<double>(dir / "d.upck", 7); }), ErrorCode::DimMismatch);
  std::string bytes = slurp(dir / "d.upck");
  bytes[4] = 9;
  spit(dir / "v.upck", bytes);
  EXPECT_EQ(code_of([&] { load_checkpoint<double>(dir / "v.upck"); }), ErrorCode::VersionMismatch);
  spit(dir / "t.upck", slurp(dir / "d.upck").substr(0, 40));
  EXPECT_EQ(code_of([&] { load_checkpoint<double>(dir / "t.upck"); }), ErrorCode::TruncatedFile);
}

TEST(Checkpoint, PromptSwapChangesFusedOutput) {
  ModelConfig m;
  m.d_in = 5;
  m.d_w = 4;
  m.d_h = 6;
  m.d_z = 3;
  m.d_hidden = 6;
  m.context_length = 2;
  m.num_clusters = 2;
  const auto a = init_model<double>(m, 10);
  auto b = init_model<double>(m, 20);
  Rng rng(3);
  const DenseMatrix x = oracle::random_matrix(rng, 3, 5);
  const DenseMatrix before = encode(b, x).h;
  const fs::path p = scratch("swap") / "a.upck";
  save_checkpoint(a, p);
  replace_prompt(b, load_checkpoint<double>(p).prompt);
  const DenseMatrix after = encode(b, x).h;
  EXPECT_NE(after, before);
  EXPECT_EQ(after, encode(a, x).h);  // same fuser seed, same prompt
}

TEST(Config, StrictParsingAndDefaults) {
  const nlohmann::json doc = nlohmann::json::parse(R"({
    "dataset": {"synth": {"num_classes": 3, "per_class": 5, "dim": 4}},
    "seed": 5, "budget": 6, "strategies": ["random", "confidence"],
    "train": {"epochs": 2, "precision": "f32", "num_clusters": 0},
    "augment": {"kind": "feature_dropout", "drop_prob": 0.2},
    "eval": {"knn_k": 1, "probe": {"iterations": 10}}
  })");
  const ExperimentConfig cfg = parse_experiment_config(doc);
  EXPECT_EQ(cfg.budget, 6u);
  EXPECT_EQ(cfg.train.precision, Precision::F32);
  EXPECT_EQ(cfg.augment.kind, AugmentKind::FeatureDropout);
  EXPECT_EQ(cfg.eval.knn_k, std::optional<std::size_t>(1));
  EXPECT_EQ(cfg.eval.probe.iterations, 10u);
  EXPECT_EQ(cfg.strategies, (std::vector<Strategy>{Strategy::Random, Strategy::Confidence}));
  const ExperimentConfig r = resolve(cfg);
  EXPECT_EQ(r.train.model.num_clusters, 6u);
  EXPECT_EQ(r.train.seed, 5u);
  EXPECT_EQ(parse_experiment_config(to_json(cfg)).budget, cfg.budget);

  for (const char* bad : {R"({"budget": 3, "bogus": 1})", R"({"train": {"epoch": 2}})",
                          R"({"train": {"precision": "f16"}})", R"({"strategies": ["best"]})",
                          R"({"dataset": {"path": "a.emb", "synth": {}}})",
                          R"({"budget": "three"})"}) {
    EXPECT_EQ(code_of([&] { parse_experiment_config(nlohmann::json::parse(bad)); }),
              ErrorCode::InvalidConfig)
        << bad;
  }
}

// Input paths follow the config file; the output directory follows the caller.
TEST(Config, RelativeInputPathsResolveAgainstConfigFile) {
  const fs::path dir = scratch("cfgpath");
  spit(dir / "c.json", R"({"dataset": {"path": "data.emb"}, "checkpoint": "m.upck", "output_dir": "o"})");
  const ExperimentConfig cfg = load_experiment_config(dir / "c.json");
  EXPECT_EQ(*cfg.dataset.path, dir / "data.emb");
  EXPECT_EQ(*cfg.checkpoint, dir / "m.upck");
  EXPECT_EQ(cfg.output_dir, fs::path("o"));
}

TEST(Experiment, RandomOnlyCountsSumToBudget) {
  ExperimentConfig cfg = small_experiment(scratch("random_only"));
  cfg.strategies = {Strategy::Random};
  const ExperimentResult r = run_experiment(cfg);
  EXPECT_FALSE(r.model.has_value());
  ASSERT_EQ(r.reports.size(), 1u);
  const EvalReport& e = *r.reports[0].report;
  std::size_t total = 0;
  for (const std::size_t c : e.class_counts) total += c;
  EXPECT_EQ(total, cfg.budget);
  EXPECT_FALSE(fs::exists(cfg.output_dir / "checkpoint.upck"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "report_random.json"));
}

TEST(Experiment, OutputsAreByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ExperimentConfig cfg = small_experiment(a);
  cfg.strategies = {Strategy::Random, Strategy::Confidence, Strategy::MedoidFused,
                    Strategy::MedoidInstance, Strategy::KMeansMedoid};
  run_experiment(cfg);
  cfg.output_dir = b;
  run_experiment(cfg);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name == "config.json") continue;  // records its own output_dir
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 2u + 2 * 5);
  const nlohmann::json sel = read_json(a / "selection_confidence.json");
  EXPECT_EQ(selection_from_json(sel).indices.size(), cfg.budget);
  EXPECT_EQ(to_json(selection_from_json(sel)), sel);
}

TEST(Experiment, SelectionsIgnoreLabels) {
  const fs::path dir = scratch("firewall");
  ExperimentConfig cfg = small_experiment(dir / "with");
  EmbeddingDataset ds = materialize_dataset(cfg.dataset);
  save_dataset(ds, dir / "with.emb");
  ds.labels.reset();
  ds.num_classes = 0;
  save_dataset(ds, dir / "without.emb");
  cfg.strategies = {Strategy::Random, Strategy::Confidence, Strategy::MedoidFused,
                    Strategy::KMeansMedoid};
  cfg.dataset = DatasetSource{};
  cfg.dataset.path = dir / "with.emb";
  const ExperimentResult with = run_experiment(cfg, false);
  cfg.dataset.path = dir / "without.emb";
  const ExperimentResult without = run_experiment(cfg, false);
  ASSERT_EQ(with.selections.size(), without.selections.size());
  for (std::size_t s = 0; s < with.selections.size(); ++s) {
    EXPECT_EQ(with.selections[s], without.selections[s]);
    EXPECT_TRUE(with.reports[s].report.has_value());
    EXPECT_FALSE(without.reports[s].report.has_value());
  }
}

TEST(Experiment, BudgetLargerThanDataset) {
  ExperimentConfig cfg = small_experiment(scratch("too_big"));
  cfg.budget = 61;
  EXPECT_EQ(code_of([&] { run_experiment(cfg, false); }), ErrorCode::BudgetExceedsDataset);
}

TEST(Experiment, CheckpointSkipsTraining) {
  const fs::path dir = scratch("reuse");
  ExperimentConfig cfg = small_experiment(dir / "first");
  cfg.strategies = {Strategy::Confidence};
  const ExperimentResult first = run_experiment(cfg);
  cfg.output_dir = dir / "second";
  cfg.checkpoint = dir / "first" / "checkpoint.upck";
  const ExperimentResult second = run_experiment(cfg);
  EXPECT_FALSE(second.history.has_value());
  EXPECT_EQ(second.selections, first.selections);
}

TEST(Cli, ErrorsAreJsonOnStderr) {
  const char* cli = std::getenv("UPDP_CLI");
  if (cli == nullptr) GTEST_SKIP() << "UPDP_CLI not set";
  const fs::path dir = scratch("cli");
  spit(dir / "c.json", R"({"budget": 5, "nonsense": true})");
  const std::string cmd = std::string(cli) + " run --config " + (dir / "c.json").string() +
                          " --out " + (dir / "out").string() + " 2> " + (dir / "err").string();
  EXPECT_NE(std::system(cmd.c_str()), 0);
  const nlohmann::json err = nlohmann::json::parse(slurp(dir / "err"));
  EXPECT_EQ(err["error"], "InvalidConfig");
  EXPECT_TRUE(err["message"].is_string());

  const std::string synth = std::string(cli) + " synth --seed 2 --out " + (dir / "s").string() +
                            " > /dev/null";
  EXPECT_EQ(std::system(synth.c_str()), 0);
  EXPECT_EQ(load_dataset(dir / "s" / "dataset.emb").count, 2000u);
}
