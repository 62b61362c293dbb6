#include "updp/config.hpp"

#include <fstream>
#include <set>

#include "updp/random.hpp"

namespace updp {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects whatever was not consumed.
class StrictObject {
 public:
  StrictObject(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) {
      throw Error(ErrorCode::InvalidConfig, where_ + " must be a JSON object");
    }
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!doc_.contains(key)) return;
    seen_.insert(key);
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!doc_.contains(key) || doc_.at(key).is_null()) {
      if (doc_.contains(key)) seen_.insert(key);
      return;
    }
    T value{};
    read(key, value);
    out = value;
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) {
        throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where_);
      }
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

AugmentKind parse_augment_kind(const std::string& name) {
  for (const AugmentKind k : {AugmentKind::PrecomputedViews, AugmentKind::GaussianJitter,
                              AugmentKind::FeatureDropout}) {
    if (augment_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown augment kind '" + name + "'");
}

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::F32;
  if (name == "f64") return Precision::F64;
  throw Error(ErrorCode::InvalidConfig, "precision must be \"f32\" or \"f64\"");
}

void parse_train(const json& doc, TrainConfig& t) {
  StrictObject o(doc, "train");
  o.read("tau_instance", t.tau_instance);
  o.read("tau_cluster", t.tau_cluster);
  o.read("learning_rate", t.learning_rate);
  o.read("batch_size", t.batch_size);
  o.read("epochs", t.epochs);
  o.read("exclude_self", t.exclude_self);
  o.read("adam_beta1", t.adam_beta1);
  o.read("adam_beta2", t.adam_beta2);
  o.read("adam_eps", t.adam_eps);
  o.read("context_length", t.model.context_length);
  o.read("num_clusters", t.model.num_clusters);
  o.read("prompt_width", t.model.d_w);
  o.read("fused_width", t.model.d_h);
  o.read("instance_width", t.model.d_z);
  o.read("hidden_width", t.model.d_hidden);
  o.read("fuser_seed", t.model.fuser_seed);
  std::string precision = t.precision == Precision::F32 ? "f32" : "f64";
  o.read("precision", precision);
  t.precision = parse_precision(precision);
  o.finish();
}

void parse_augment(const json& doc, AugmentPolicy& a) {
  StrictObject o(doc, "augment");
  std::string kind(augment_kind_name(a.kind));
  o.read("kind", kind);
  a.kind = parse_augment_kind(kind);
  o.read("noise_sigma", a.noise_sigma);
  o.read("scale_by_feature_std", a.scale_by_feature_std);
  o.read("drop_prob", a.drop_prob);
  o.read("seed", a.seed);
  o.finish();
  a.validate();
}

void parse_eval(const json& doc, EvalSettings& e) {
  StrictObject o(doc, "eval");
  o.read("knn_k", e.knn_k);
  if (o.has("probe")) {
    StrictObject p(o.child("probe"), "eval.probe");
    p.read("learning_rate", e.probe.learning_rate);
    p.read("iterations", e.probe.iterations);
    p.read("weight_decay", e.probe.weight_decay);
    p.read("normalize_features", e.probe.normalize_features);
    p.finish();
  }
  o.finish();
}

}  // namespace

std::string_view augment_kind_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::PrecomputedViews: return "precomputed_views";
    case AugmentKind::GaussianJitter: return "gaussian_jitter";
    case AugmentKind::FeatureDropout: return "feature_dropout";
  }
  return "unknown";
}

SynthConfig parse_synth_config(const json& doc) {
  SynthConfig s;
  StrictObject o(doc, "synth");
  o.read("num_classes", s.num_classes);
  o.read("per_class", s.per_class);
  o.read("dim", s.dim);
  o.read("separation", s.separation);
  o.read("sigma", s.sigma);
  o.read("subclusters", s.subclusters);
  o.read("subcluster_spread", s.subcluster_spread);
  o.read("view_sigma", s.view_sigma);
  o.read("views", s.views);
  o.read("seed", s.seed);
  o.finish();
  s.validate();
  return s;
}

json to_json(const SynthConfig& s) {
  return json{{"num_classes", s.num_classes}, {"per_class", s.per_class},
              {"dim", s.dim},                 {"separation", s.separation},
              {"sigma", s.sigma},             {"subclusters", s.subclusters},
              {"subcluster_spread", s.subcluster_spread},
              {"view_sigma", s.view_sigma},   {"views", s.views},
              {"seed", s.seed}};
}

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig cfg;
  StrictObject o(doc, "config");
  if (!o.has("dataset")) {
    throw Error(ErrorCode::InvalidConfig, "config needs a \"dataset\" entry");
  }
  {
    StrictObject d(o.child("dataset"), "dataset");
    std::optional<std::string> path;
    d.read("path", path);
    if (path) cfg.dataset.path = *path;
    if (d.has("synth")) {
      const json& synth = d.child("synth");
      cfg.dataset.synth = parse_synth_config(synth);
      cfg.dataset.synth_seed_from_run = !synth.contains("seed");
    }
    d.finish();
    if (cfg.dataset.path.has_value() == cfg.dataset.synth.has_value()) {
      throw Error(ErrorCode::InvalidConfig, "dataset needs exactly one of \"path\" or \"synth\"");
    }
  }
  o.read("seed", cfg.seed);
  o.read("budget", cfg.budget);
  if (o.has("strategies")) {
    std::vector<std::string> names;
    o.read("strategies", names);
    cfg.strategies.clear();
    for (const auto& n : names) cfg.strategies.push_back(parse_strategy(n));
  }
  if (o.has("train")) parse_train(o.child("train"), cfg.train);
  if (o.has("augment")) parse_augment(o.child("augment"), cfg.augment);
  if (o.has("eval")) parse_eval(o.child("eval"), cfg.eval);
  std::string out_dir = cfg.output_dir.string();
  o.read("output_dir", out_dir);
  cfg.output_dir = out_dir;
  std::optional<std::string> checkpoint;
  o.read("checkpoint", checkpoint);
  if (checkpoint) cfg.checkpoint = *checkpoint;
  o.read("save_epoch_checkpoints", cfg.save_epoch_checkpoints);
  o.finish();

  if (cfg.budget == 0) throw Error(ErrorCode::InvalidConfig, "budget must be at least 1");
  if (cfg.strategies.empty()) throw Error(ErrorCode::InvalidConfig, "no strategies configured");
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = parse_experiment_config(doc);
  // Relative dataset and checkpoint paths are relative to the config file.
  const auto base = path.parent_path();
  if (cfg.dataset.path && cfg.dataset.path->is_relative()) cfg.dataset.path = base / *cfg.dataset.path;
  if (cfg.checkpoint && cfg.checkpoint->is_relative()) cfg.checkpoint = base / *cfg.checkpoint;
  return cfg;
}

ExperimentConfig resolve(ExperimentConfig cfg) {
  cfg.train.seed = cfg.seed;
  if (cfg.dataset.synth && cfg.dataset.synth_seed_from_run) {
    cfg.dataset.synth->seed = derive_seed(cfg.seed, "synth");
    cfg.dataset.synth_seed_from_run = false;
  }
  if (cfg.train.model.num_clusters == 0) cfg.train.model.num_clusters = cfg.budget;
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json dataset = json::object();
  if (cfg.dataset.path) dataset["path"] = cfg.dataset.path->generic_string();
  if (cfg.dataset.synth) dataset["synth"] = to_json(*cfg.dataset.synth);

  std::vector<std::string> strategies;
  for (const Strategy s : cfg.strategies) strategies.emplace_back(strategy_name(s));

  const TrainConfig& t = cfg.train;
  json train{{"tau_instance", t.tau_instance},
             {"tau_cluster", t.tau_cluster},
             {"learning_rate", t.learning_rate},
             {"batch_size", t.batch_size},
             {"epochs", t.epochs},
             {"exclude_self", t.exclude_self},
             {"adam_beta1", t.adam_beta1},
             {"adam_beta2", t.adam_beta2},
             {"adam_eps", t.adam_eps},
             {"context_length", t.model.context_length},
             {"num_clusters", t.model.num_clusters},
             {"prompt_width", t.model.d_w},
             {"fused_width", t.model.d_h},
             {"instance_width", t.model.d_z},
             {"hidden_width", t.model.d_hidden},
             {"fuser_seed", t.model.fuser_seed},
             {"precision", t.precision == Precision::F32 ? "f32" : "f64"}};

  json augment{{"kind", augment_kind_name(cfg.augment.kind)},
               {"noise_sigma", cfg.augment.noise_sigma},
               {"scale_by_feature_std", cfg.augment.scale_by_feature_std},
               {"drop_prob", cfg.augment.drop_prob},
               {"seed", cfg.augment.seed ? json(*cfg.augment.seed) : json(nullptr)}};

  json eval{{"knn_k", cfg.eval.knn_k ? json(*cfg.eval.knn_k) : json(nullptr)},
            {"probe",
             {{"learning_rate", cfg.eval.probe.learning_rate},
              {"iterations", cfg.eval.probe.iterations},
              {"weight_decay", cfg.eval.probe.weight_decay},
              {"normalize_features", cfg.eval.probe.normalize_features}}}};

  json doc{{"dataset", dataset},   {"seed", cfg.seed},     {"budget", cfg.budget},
           {"strategies", strategies}, {"train", train}, {"augment", augment},
           {"eval", eval},         {"output_dir", cfg.output_dir.generic_string()},
           {"save_epoch_checkpoints", cfg.save_epoch_checkpoints}};
  if (cfg.checkpoint) doc["checkpoint"] = cfg.checkpoint->generic_string();
  return doc;
}

}  // namespace updp
