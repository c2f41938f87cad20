#include "dcc/config.hpp"

#include "dcc/errors.hpp"

#include <fstream>
#include <set>
#include <string>

namespace dcc {

using nlohmann::json;

namespace {

json encode(int v) { return v; }
json encode(double v) { return v; }
json encode(bool v) { return v; }
json encode(std::uint64_t v) { return v; }
json encode(FusionMode m) { return m == FusionMode::average ? "average" : "linear"; }
json encode(DecompositionMode m) { return m == DecompositionMode::spatial_temporal ? "spatial_temporal" : "global"; }
json encode(const std::vector<Modality>& ms) { return format_modalities(ms); }

template <typename T>
void decode(const json& j, T& out, const std::string& key) {
  try {
    out = j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

void decode(const json& j, FusionMode& out, const std::string& key) {
  const auto s = j.is_string() ? j.get<std::string>() : std::string();
  if (s == "average") {
    out = FusionMode::average;
  } else if (s == "linear") {
    out = FusionMode::linear;
  } else {
    throw ConfigError("config field '" + key + "' must be \"average\" or \"linear\"");
  }
}

void decode(const json& j, DecompositionMode& out, const std::string& key) {
  const auto s = j.is_string() ? j.get<std::string>() : std::string();
  if (s == "spatial_temporal") {
    out = DecompositionMode::spatial_temporal;
  } else if (s == "global") {
    out = DecompositionMode::global;
  } else {
    throw ConfigError("config field '" + key + "' must be \"spatial_temporal\" or \"global\"");
  }
}

void decode(const json& j, std::vector<Modality>& out, const std::string& key) {
  if (!j.is_string()) throw ConfigError("config field '" + key + "' must be a string like \"J,B,M\"");
  // format_modalities joins with '+', the CLI uses ','; accept both.
  auto text = j.get<std::string>();
  for (auto& ch : text) {
    if (ch == '+') ch = ',';
  }
  out = parse_modalities(text);
}

template <typename F>
void visit(ModelConfig& c, F&& f) {
  f("dim", c.dim);
  f("n_layers", c.n_layers);
  f("n_heads", c.n_heads);
  f("ffn_mult", c.ffn_mult);
  f("frames", c.frames);
  f("joints", c.joints);
  f("channels", c.channels);
  f("modalities", c.modalities);
  f("fusion", c.fusion);
  f("projector_hidden_mult", c.projector_hidden_mult);
  f("decomposition", c.decomposition);
}

template <typename F>
void visit(LossConfig& c, F&& f) {
  f("alpha", c.alpha);
  f("beta", c.beta);
  f("lambda", c.lambda);
  f("gamma", c.gamma);
  f("eps", c.eps);
}

template <typename F>
void visit(AugmentationConfig& c, F&& f) {
  f("crop", c.crop);
  f("crop_min", c.crop_min);
  f("crop_max", c.crop_max);
  f("rotate", c.rotate);
  f("rotation_max", c.rotation_max);
  f("shear", c.shear);
  f("shear_max", c.shear_max);
  f("jitter", c.jitter);
  f("jitter_sd", c.jitter_sd);
  f("frames_out", c.frames_out);
}

template <typename F>
void visit(SynthConfig& c, F&& f) {
  f("n_classes", c.n_classes);
  f("n_performances", c.n_performances);
  f("n_views", c.n_views);
  f("n_joints", c.n_joints);
  f("n_frames", c.n_frames);
  f("noise_sd", c.noise_sd);
  f("style_amplitude", c.style_amplitude);
  f("facing_range", c.facing_range);
  f("n_subjects", c.n_subjects);
  f("seed", c.seed);
  f("class_seed", c.class_seed);
}

template <typename F>
void visit_scalars(TrainConfig& c, F&& f) {
  f("batch_size", c.batch_size);
  f("max_epochs", c.max_epochs);
  f("base_lr", c.base_lr);
  f("drop_lr", c.drop_lr);
  f("drop_epoch", c.drop_epoch);
  f("weight_decay", c.weight_decay);
  f("seed", c.seed);
  f("multiview", c.multiview);
  f("checkpoint_every", c.checkpoint_every);
  f("log_steps", c.log_steps);
  f("workers", c.workers);
}

template <typename C>
json dump(const C& cfg) {
  json j = json::object();
  visit(const_cast<C&>(cfg), [&](const char* key, auto& field) { j[key] = encode(field); });
  return j;
}

template <typename C>
void apply(C& cfg, const json& j, const std::set<std::string>& nested = {}) {
  if (!j.is_object()) throw ConfigError("config section must be a JSON object");
  std::set<std::string> known(nested);
  visit(cfg, [&](const char* key, auto& field) {
    known.insert(key);
    if (auto it = j.find(key); it != j.end()) decode(*it, field, key);
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
  }
}

// TrainConfig has nested sections, so it routes its scalar fields through
// the same visitor interface.
struct TrainScalars {
  TrainConfig& cfg;
};

template <typename F>
void visit(TrainScalars& t, F&& f) {
  visit_scalars(t.cfg, f);
}

}  // namespace

json to_json(const ModelConfig& cfg) { return dump(cfg); }
json to_json(const LossConfig& cfg) { return dump(cfg); }
json to_json(const AugmentationConfig& cfg) { return dump(cfg); }
json to_json(const SynthConfig& cfg) { return dump(cfg); }

json to_json(const TrainConfig& cfg) {
  TrainScalars scalars{const_cast<TrainConfig&>(cfg)};
  json j = dump(scalars);
  j["loss"] = to_json(cfg.loss);
  j["augmentation"] = to_json(cfg.augmentation);
  j["model"] = to_json(cfg.model);
  return j;
}

void apply_json(ModelConfig& cfg, const json& j) { apply(cfg, j); }
void apply_json(LossConfig& cfg, const json& j) { apply(cfg, j); }
void apply_json(AugmentationConfig& cfg, const json& j) { apply(cfg, j); }
void apply_json(SynthConfig& cfg, const json& j) { apply(cfg, j); }

void apply_json(TrainConfig& cfg, const json& j) {
  TrainScalars scalars{cfg};
  apply(scalars, j, {"loss", "augmentation", "model"});
  if (auto it = j.find("loss"); it != j.end()) apply_json(cfg.loss, *it);
  if (auto it = j.find("augmentation"); it != j.end()) apply_json(cfg.augmentation, *it);
  if (auto it = j.find("model"); it != j.end()) apply_json(cfg.model, *it);
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  apply_json(cfg, j);
  cfg.validate();
  return cfg;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace dcc
