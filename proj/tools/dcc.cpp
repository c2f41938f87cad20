// dcc: synthesize or ingest skeleton data, pretrain, evaluate, export.
//
// Exit codes: 0 success, 2 usage, 3 data/format, 4 numerical failure.

#include "dcc/checkpoint.hpp"
#include "dcc/config.hpp"
#include "dcc/dataset_io.hpp"
#include "dcc/errors.hpp"
#include "dcc/evaluation.hpp"
#include "dcc/ntu_parser.hpp"
#include "dcc/synth.hpp"
#include "dcc/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <set>
#include <sstream>

#ifndef DCC_VERSION
#define DCC_VERSION "unknown"
#endif
#ifndef DCC_SPLITS_DIR
#define DCC_SPLITS_DIR "data/splits"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Relative inputs that do not exist are looked up under DCC_DATA_DIR.
fs::path resolve_input(const fs::path& p) {
  if (fs::exists(p)) return p;
  if (const char* root = std::getenv("DCC_DATA_DIR"); root && p.is_relative()) {
    const fs::path alt = fs::path(root) / p;
    if (fs::exists(alt)) return alt;
  }
  throw UsageError("file not found: " + p.string());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw dcc::FormatError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw dcc::FormatError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Manifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::string started;
  json outputs = json::object();

  void write(const fs::path& path) const {
    json j = {{"command", command}, {"config", config},        {"seed", seed},
              {"version", DCC_VERSION}, {"started", started}, {"finished", timestamp()},
              {"outputs", outputs}};
    write_text_atomic(path, j.dump(2) + "\n");
  }
};

fs::path manifest_path(const fs::path& artifact) { return artifact.string() + ".manifest.json"; }

std::vector<dcc::Modality> modalities_flag(const std::string& text) {
  try {
    return dcc::parse_modalities(text);
  } catch (const dcc::ConfigError& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  dcc::SynthConfig cfg;
  int test_performances = 50;
  std::string out = "synth_train.skd";
  std::string test_out = "synth_test.skd";
};

int run_synth(const SynthArgs& a, const std::string& command) {
  const auto started = timestamp();
  dcc::SynthConfig cfg = a.cfg;
  cfg.n_performances = a.cfg.n_performances + a.test_performances;
  try {
    cfg.validate();
  } catch (const dcc::ConfigError& e) {
    throw UsageError(e.what());
  }
  auto train = dcc::synth_generate(cfg);
  const auto test = dcc::split_off_performances(train, a.cfg.n_performances);
  dcc::write_dataset(fs::path(a.out), train);
  Manifest m{command, dcc::to_json(a.cfg), a.cfg.seed, started};
  m.config["test_performances"] = a.test_performances;
  m.outputs["train"] = a.out;
  if (a.test_performances > 0) {
    dcc::write_dataset(fs::path(a.test_out), test);
    m.outputs["test"] = a.test_out;
  }
  m.write(manifest_path(a.out));
  std::cout << "wrote " << train.sequences.size() << " sequences to " << a.out;
  if (a.test_performances > 0) std::cout << " and " << test.sequences.size() << " to " << a.test_out;
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string input;
  std::string split = "xsub";
  std::string part = "train";
  std::string out;
  std::string splits_dir = DCC_SPLITS_DIR;
};

int run_ingest(const IngestArgs& a, const std::string& command) {
  const auto started = timestamp();
  const auto protocol = dcc::parse_protocol(a.split);
  const bool want_train = a.part == "train";
  fs::path input = a.input;
  if (input.empty()) {
    const char* root = std::getenv("DCC_DATA_DIR");
    if (!root) throw UsageError("--input is required when DCC_DATA_DIR is unset");
    input = root;
  }
  if (!fs::is_directory(input)) throw UsageError("not a directory: " + input.string());
  const auto lists = dcc::NtuSplitLists::load(a.splits_dir);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".skeleton") files.push_back(entry.path());
  }
  if (files.empty()) throw dcc::FormatError("no skeleton files found in " + input.string());
  std::sort(files.begin(), files.end());

  dcc::Dataset dataset;
  dataset.topology = dcc::SkeletonTopology::ntu25();
  std::size_t skipped = 0;
  int max_action = 0;
  for (const auto& path : files) {
    const auto id = dcc::parse_ntu_filename(path.filename().string());
    if (!id) {
      std::cerr << "warning: skipping " << path.filename().string() << " (unrecognized file name)\n";
      ++skipped;
      continue;
    }
    if (dcc::is_train_split(*id, protocol, lists) != want_train) continue;
    std::ifstream in(path);
    if (!in) throw dcc::FormatError("cannot open " + path.string());
    std::vector<dcc::SkeletonSequence> bodies;
    try {
      bodies = dcc::parse_ntu_skeleton(in, dataset.topology);
    } catch (const dcc::Error& e) {
      throw dcc::FormatError(path.filename().string() + ": " + e.what());
    }
    if (bodies.empty()) {
      std::cerr << "warning: skipping " << path.filename().string() << " (no bodies)\n";
      ++skipped;
      continue;
    }
    auto seq = dcc::select_main_actor(std::move(bodies));
    dcc::apply_file_id(seq, *id);
    max_action = std::max(max_action, id->action);
    dataset.sequences.push_back(std::move(seq));
  }
  for (int a_ = 1; a_ <= max_action; ++a_) {
    std::ostringstream name;
    name << 'A' << std::setw(3) << std::setfill('0') << a_;
    dataset.class_names.push_back(name.str());
  }
  dcc::write_dataset(fs::path(a.out), dataset);
  Manifest m{command, {{"split", a.split}, {"part", a.part}, {"input", input.string()}}, 0, started};
  m.outputs["dataset"] = a.out;
  m.outputs["skipped"] = skipped;
  m.write(manifest_path(a.out));
  std::cout << "wrote " << dataset.sequences.size() << " sequences to " << a.out << " (" << skipped
            << " files skipped)\n";
  return kOk;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  std::string config;
  std::string data = "synth_train.skd";
  std::string out = "dcc_model.ckpt";
  std::string metrics = "metrics.jsonl";
  std::string resume;
  std::optional<int> epochs;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> lambda;
  std::optional<bool> multiview;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> modalities;
  std::optional<std::string> decomposition;
  bool log_steps = false;
};

dcc::TrainConfig resolve_train_config(const PretrainArgs& a) {
  dcc::TrainConfig cfg = dcc::TrainConfig::desk();
  if (!a.config.empty()) {
    auto doc = dcc::read_json_file(resolve_input(a.config));
    // A run manifest is accepted as a config: its snapshot is the config.
    if (doc.contains("command") && doc.contains("config")) doc = doc.at("config");
    dcc::apply_json(cfg, doc);
  }
  if (a.epochs) {
    if (*a.epochs < 1) throw UsageError("--epochs must be >= 1");
    // Keep the drop at the same fraction of the schedule.
    const double ratio = static_cast<double>(cfg.drop_epoch) / static_cast<double>(cfg.max_epochs);
    cfg.max_epochs = *a.epochs;
    cfg.drop_epoch = std::clamp(static_cast<int>(std::lround(ratio * *a.epochs)), 1, *a.epochs);
  }
  if (a.alpha) cfg.loss.alpha = *a.alpha;
  if (a.beta) cfg.loss.beta = *a.beta;
  if (a.lambda) cfg.loss.lambda = *a.lambda;
  if (a.multiview) cfg.multiview = *a.multiview;
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  if (a.log_steps) cfg.log_steps = true;
  if (a.modalities) cfg.model.modalities = modalities_flag(*a.modalities);
  if (a.decomposition) {
    if (*a.decomposition == "global") {
      cfg.model.decomposition = dcc::DecompositionMode::global;
    } else if (*a.decomposition == "spatial_temporal") {
      cfg.model.decomposition = dcc::DecompositionMode::spatial_temporal;
    } else {
      throw UsageError("--decomposition must be spatial_temporal or global");
    }
  }
  try {
    cfg.validate();
  } catch (const dcc::ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int run_pretrain(const PretrainArgs& a, const std::string& command) {
  const auto started = timestamp();
  const auto cfg = resolve_train_config(a);
  const auto data_path = resolve_input(a.data);
  const auto dataset = dcc::read_dataset(data_path);
  if (dataset.topology.n_joints() != cfg.model.joints) {
    throw UsageError("dataset has " + std::to_string(dataset.topology.n_joints()) +
                     " joints; set model.joints accordingly in the config");
  }
  dcc::PretrainOptions opts;
  opts.checkpoint_path = a.out;
  opts.metrics_path = a.metrics;
  if (!a.resume.empty()) opts.resume_from = resolve_input(a.resume);
  opts.on_epoch = [&](const dcc::EpochRecord& r) {
    std::cout << "epoch " << r.epoch + 1 << "/" << cfg.max_epochs << "  total " << r.total << "  L_d "
              << r.decomposition << "  L_c " << r.composition << "  L_reg " << r.regularization << "  lr " << r.lr
              << std::endl;
  };
  const auto result = dcc::pretrain(dataset, cfg, opts);
  Manifest m{command, dcc::to_json(cfg), cfg.seed, started};
  m.outputs = {{"checkpoint", a.out}, {"metrics", a.metrics}, {"data", data_path.string()},
               {"epochs_completed", result.epochs_completed}};
  m.write(manifest_path(a.out));
  std::cout << "wrote " << a.out << " and " << a.metrics << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint = "dcc_model.ckpt";
  std::string train = "synth_train.skd";
  std::string test = "synth_test.skd";
  std::string protocol = "linear";
  std::string modalities = "J,B,M";
  std::optional<double> fraction;
  std::uint64_t seed = 0;
  std::optional<int> epochs;
  int k = 1;
  std::string csv = "results.csv";
  std::string dataset_name;
  std::string joint_map;
};

dcc::JointMapping read_joint_map(const fs::path& path) {
  const auto doc = dcc::read_json_file(path);
  try {
    return {doc.at("source_joint").get<std::vector<int>>(), {doc.at("parent").get<std::vector<int>>()}};
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("joint map " + path.string() + ": expected {\"source_joint\": [...], \"parent\": [...]}");
  }
}

int run_eval(const EvalArgs& a, const std::string& command) {
  const auto started = timestamp();
  const std::set<std::string> protocols{"linear", "knn", "semi", "transfer"};
  if (!protocols.contains(a.protocol)) throw UsageError("--protocol must be linear, knn, semi or transfer");
  if (a.fraction && a.protocol != "semi") throw UsageError("--fraction only applies to --protocol semi");
  if (!a.joint_map.empty() && a.protocol != "transfer") throw UsageError("--joint-map only applies to --protocol transfer");
  if (a.k != 1 && a.protocol != "knn") throw UsageError("--k only applies to --protocol knn");
  const auto subset = modalities_flag(a.modalities);

  const auto model = dcc::load_model(resolve_input(a.checkpoint));
  const auto train_path = resolve_input(a.train);
  const auto test_path = resolve_input(a.test);
  const auto train = dcc::read_dataset(train_path);
  const auto test = dcc::read_dataset(test_path);
  for (auto m : subset) {
    if (!model.config().has(m)) throw UsageError("checkpoint was trained without modality " + std::string(dcc::to_string(m)));
  }

  double fraction = 1.0;
  double acc = 0.0;
  if (a.protocol == "linear" || a.protocol == "knn") {
    const auto train_bank = dcc::extract_bank(model, train, subset, "train");
    const auto test_bank = dcc::extract_bank(model, test, subset, "test");
    if (a.protocol == "linear") {
      dcc::ProbeConfig pc;
      pc.seed = a.seed;
      if (a.epochs) pc.epochs = *a.epochs;
      acc = dcc::linear_probe(train_bank, test_bank, pc);
    } else {
      acc = dcc::knn_retrieve(train_bank, test_bank, {a.k, false});
    }
  } else {
    dcc::FinetuneConfig fc;
    fc.seed = a.seed;
    fc.modalities = subset;
    if (a.epochs) fc.epochs = *a.epochs;
    if (a.protocol == "semi") {
      fraction = a.fraction.value_or(1.0);
      if (!(fraction > 0.0) || fraction > 1.0) throw UsageError("--fraction must be in (0, 1]");
      acc = dcc::semi_supervised(model, train, test, fraction, fc).accuracy;
    } else {
      std::optional<dcc::JointMapping> mapping;
      if (!a.joint_map.empty()) mapping = read_joint_map(resolve_input(a.joint_map));
      acc = dcc::transfer(model, train, test, fc, mapping);
    }
  }

  const std::string dataset_name = a.dataset_name.empty() ? train_path.stem().string() : a.dataset_name;
  const auto subset_text = dcc::format_modalities(subset);
  dcc::append_accuracy_csv(a.csv, {a.protocol, dataset_name, subset_text, fraction, a.seed, acc});
  std::cout << a.protocol << " " << dataset_name << " " << subset_text << " fraction=" << fraction
            << " seed=" << a.seed << " accuracy=" << acc << "\n";

  Manifest m{command,
             {{"protocol", a.protocol},
              {"modalities", subset_text},
              {"fraction", fraction},
              {"k", a.k},
              {"epochs", a.epochs ? json(*a.epochs) : json(nullptr)},
              {"checkpoint", a.checkpoint},
              {"train", a.train},
              {"test", a.test}},
             a.seed,
             started};
  m.outputs = {{"csv", a.csv}, {"accuracy", acc}};
  m.write(manifest_path(a.csv));
  return kOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  std::string checkpoint = "dcc_model.ckpt";
  std::string data = "synth_test.skd";
  std::string modalities = "J,B,M";
  std::string split;
  std::string out = "features.fbk";
};

int run_export(const ExportArgs& a, const std::string& command) {
  const auto started = timestamp();
  const auto subset = modalities_flag(a.modalities);
  const auto model = dcc::load_model(resolve_input(a.checkpoint));
  const auto data_path = resolve_input(a.data);
  const auto dataset = dcc::read_dataset(data_path);
  const auto bank = dcc::extract_bank(model, dataset, subset, a.split.empty() ? data_path.stem().string() : a.split);
  dcc::write_bank(fs::path(a.out), bank);
  Manifest m{command, {{"checkpoint", a.checkpoint}, {"data", a.data}, {"modalities", dcc::format_modalities(subset)}},
             0, started};
  m.outputs = {{"bank", a.out}, {"rows", bank.size()}, {"width", bank.features.cols()}};
  m.write(manifest_path(a.out));
  std::cout << "wrote " << bank.size() << " x " << bank.features.cols() << " features to " << a.out << "\n";
  return kOk;
}

std::string joined_command(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal skeleton pretraining: data, training, evaluation"};
  app.set_version_flag("--version", DCC_VERSION);
  app.require_subcommand(1);
  const std::string command = joined_command(argc, argv);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  s->add_option("--classes", synth.cfg.n_classes, "Number of action classes")->check(CLI::PositiveNumber);
  s->add_option("--performances", synth.cfg.n_performances, "Training performances")->check(CLI::PositiveNumber);
  s->add_option("--test-performances", synth.test_performances, "Held-out performances (0: none)")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--views", synth.cfg.n_views, "Cameras per performance")->check(CLI::PositiveNumber);
  s->add_option("--joints", synth.cfg.n_joints, "Joints per skeleton")->check(CLI::Range(2, 1024));
  s->add_option("--frames", synth.cfg.n_frames, "Frames per clip")->check(CLI::PositiveNumber);
  s->add_option("--noise", synth.cfg.noise_sd, "Gaussian noise sd")->check(CLI::NonNegativeNumber);
  s->add_option("--style", synth.cfg.style_amplitude, "Per-performance joint motion amplitude (rad)")
      ->check(CLI::NonNegativeNumber);
  s->add_option("--facing", synth.cfg.facing_range, "Facing yaw range (rad)")->check(CLI::NonNegativeNumber);
  s->add_option("--subjects", synth.cfg.n_subjects, "Distinct subjects")->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.cfg.seed, "Sampling seed");
  s->add_option("--class-seed", synth.cfg.class_seed, "Seed of the class motion programs");
  s->add_option("--out", synth.out, "Training set output")->capture_default_str();
  s->add_option("--test-out", synth.test_out, "Test set output")->capture_default_str();

  IngestArgs ingest;
  auto* g = app.add_subcommand("ingest-ntu", "Convert a directory of NTU .skeleton files");
  g->add_option("--input", ingest.input, "Directory of .skeleton files (default: $DCC_DATA_DIR)");
  g->add_option("--split", ingest.split, "Protocol")->check(CLI::IsMember({"xsub", "xview", "xsetup"}));
  g->add_option("--part", ingest.part, "Split side")->check(CLI::IsMember({"train", "test"}));
  g->add_option("--out", ingest.out, "Output dataset")->required();
  g->add_option("--splits-dir", ingest.splits_dir, "Directory with the split id lists")->capture_default_str();

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Self-supervised pretraining");
  p->add_option("--config", pre.config, "JSON config or run manifest");
  p->add_option("--data", pre.data, "Training dataset")->capture_default_str();
  p->add_option("--out", pre.out, "Checkpoint path")->capture_default_str();
  p->add_option("--metrics", pre.metrics, "JSON-lines metrics path")->capture_default_str();
  p->add_option("--resume", pre.resume, "Resume from a training checkpoint");
  p->add_option("--epochs", pre.epochs, "Override max_epochs (drop epoch keeps its ratio)");
  p->add_option("--alpha", pre.alpha, "Decomposition weight")->check(CLI::NonNegativeNumber);
  p->add_option("--beta", pre.beta, "Composition weight")->check(CLI::NonNegativeNumber);
  p->add_option("--lambda", pre.lambda, "Variance weight")->check(CLI::NonNegativeNumber);
  p->add_option("--multiview", pre.multiview, "Pair views of one performance (true/false)");
  p->add_option("--seed", pre.seed, "Run seed");
  p->add_option("--workers", pre.workers, "Sampling threads")->check(CLI::PositiveNumber);
  p->add_option("--modalities", pre.modalities, "Modalities, e.g. J,B,M");
  p->add_option("--decomposition", pre.decomposition, "spatial_temporal or global");
  p->add_flag("--log-steps", pre.log_steps, "Log every optimizer step");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Pretrained checkpoint")->capture_default_str();
  e->add_option("--train", ev.train, "Labeled training set")->capture_default_str();
  e->add_option("--test", ev.test, "Labeled test set")->capture_default_str();
  e->add_option("--protocol", ev.protocol, "linear, knn, semi or transfer")->capture_default_str();
  e->add_option("--modalities", ev.modalities, "Modality subset, e.g. J or J,M,B")->capture_default_str();
  e->add_option("--fraction", ev.fraction, "Labeled fraction for semi");
  e->add_option("--seed", ev.seed, "Protocol seed");
  e->add_option("--epochs", ev.epochs, "Probe or fine-tune epochs")->check(CLI::PositiveNumber);
  e->add_option("--k", ev.k, "Neighbors for knn")->check(CLI::PositiveNumber);
  e->add_option("--csv", ev.csv, "Accuracy CSV to append to")->capture_default_str();
  e->add_option("--dataset-name", ev.dataset_name, "Dataset column value (default: train file stem)");
  e->add_option("--joint-map", ev.joint_map, "JSON joint mapping for transfer");

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "Write a feature bank");
  x->add_option("--checkpoint", ex.checkpoint, "Pretrained checkpoint")->capture_default_str();
  x->add_option("--data", ex.data, "Dataset to embed")->capture_default_str();
  x->add_option("--modalities", ex.modalities, "Modality subset")->capture_default_str();
  x->add_option("--split", ex.split, "Split tag stored in the bank");
  x->add_option("--out", ex.out, "Bank path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, command);
    if (g->parsed()) return run_ingest(ingest, command);
    if (p->parsed()) return run_pretrain(pre, command);
    if (e->parsed()) return run_eval(ev, command);
    if (x->parsed()) return run_export(ex, command);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const dcc::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const dcc::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumerical;
  } catch (const dcc::Error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  }
  return kUsage;
}
