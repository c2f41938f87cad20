#include "dcc/evaluation.hpp"

#include "binary_io.hpp"
#include "dcc/augment.hpp"
#include "dcc/errors.hpp"
#include "dcc/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

namespace dcc {

using nlohmann::json;

bool FeatureBank::fully_labeled() const {
  return std::none_of(labels.begin(), labels.end(), [](int l) { return l == kUnlabeledRow; });
}

namespace {

std::vector<ModalityBundle> eval_bundles(const Dataset& dataset, int frames, std::size_t begin, std::size_t end) {
  std::vector<ModalityBundle> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const auto seq = prepare_eval(dataset.sequences[i], dataset.topology, frames);
    out.push_back(make_bundle(seq.coords, dataset.topology));
  }
  return out;
}

void require_labeled(const FeatureBank& bank, const char* what) {
  if (bank.size() == 0) throw ConfigError(std::string(what) + " bank is empty");
  if (!bank.fully_labeled()) throw ConfigError(std::string(what) + " bank has unlabeled rows");
  if (static_cast<std::size_t>(bank.size()) != bank.labels.size()) {
    throw ShapeError(std::string(what) + " bank: feature rows and labels differ in count");
  }
}

int class_count(std::span<const int> labels, std::size_t named) {
  int n = static_cast<int>(named);
  for (int l : labels) n = std::max(n, l + 1);
  return n;
}

std::vector<int> dataset_labels(const Dataset& dataset) {
  std::vector<int> labels;
  labels.reserve(dataset.sequences.size());
  for (const auto& s : dataset.sequences) labels.push_back(s.label ? *s.label : kUnlabeledRow);
  return labels;
}

MatrixF gather_rows(const MatrixF& x, std::span<const std::size_t> rows) {
  MatrixF out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

int argmax_row(const MatrixF& x, Eigen::Index r) {
  Eigen::Index best = 0;
  x.row(r).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

FeatureBank extract_bank(const Model& model, const Dataset& dataset, const std::vector<Modality>& subset,
                         const std::string& split, int chunk) {
  if (chunk < 1) throw ConfigError("extract_bank: chunk must be >= 1");
  if (dataset.topology.n_joints() != model.config().joints) {
    throw ConfigError("extract_bank: dataset has " + std::to_string(dataset.topology.n_joints()) +
                      " joints but the model expects " + std::to_string(model.config().joints));
  }
  FeatureBank bank;
  bank.split = split;
  bank.modality_subset = subset;
  bank.class_names = dataset.class_names;
  bank.labels = dataset_labels(dataset);
  const std::size_t n = dataset.sequences.size();
  bank.features.resize(static_cast<Eigen::Index>(n), 2 * model.config().dim);
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(chunk));
    const auto bundles = eval_bundles(dataset, model.config().frames, begin, end);
    const auto y = model.unified(bundles, subset);
    bank.features.middleRows(static_cast<Eigen::Index>(begin), y.rows()) = y.value();
  }
  if (!bank.features.allFinite()) throw NumericalError("extract_bank: non-finite features");
  return bank;
}

void write_bank(std::ostream& out, const FeatureBank& bank) {
  if (static_cast<std::size_t>(bank.size()) != bank.labels.size()) {
    throw ShapeError("write_bank: feature rows and labels differ in count");
  }
  json manifest = {{"count", bank.size()},
                   {"width", bank.features.cols()},
                   {"modality_subset", format_modalities(bank.modality_subset)},
                   {"split", bank.split},
                   {"class_names", bank.class_names}};
  const std::string text = manifest.dump();
  out.write(kBankMagic, sizeof(kBankMagic));
  detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < bank.size(); ++i) {
    const int l = bank.labels[static_cast<std::size_t>(i)];
    detail::write_u32(out, l == kUnlabeledRow ? 0xFFFFFFFFu : static_cast<std::uint32_t>(l));
    detail::write_f32(out, std::span<const float>(bank.features.row(i).data(), static_cast<std::size_t>(bank.features.cols())));
  }
  if (!out) throw FormatError("write_bank: stream write failed");
}

void write_bank(const std::filesystem::path& path, const FeatureBank& bank) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    write_bank(out, bank);
    out.flush();
    if (!out) throw FormatError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FeatureBank read_bank(std::istream& in) {
  detail::Reader r(in);
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kBankMagic, 8) != 0) throw FormatError("bad magic (not an FBK1 feature bank)", 0);
  const auto len = r.u32("manifest length");
  const auto manifest_at = r.offset();
  json manifest;
  try {
    manifest = json::parse(r.bytes(len, "manifest"));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not JSON: ") + e.what(), manifest_at);
  }
  FeatureBank bank;
  Eigen::Index count = 0;
  Eigen::Index width = 0;
  try {
    count = manifest.at("count").get<Eigen::Index>();
    width = manifest.at("width").get<Eigen::Index>();
    const auto subset = manifest.at("modality_subset").get<std::string>();
    if (!subset.empty()) {
      std::string text = subset;
      std::replace(text.begin(), text.end(), '+', ',');
      bank.modality_subset = parse_modalities(text);
    }
    bank.split = manifest.value("split", "");
    bank.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what(), manifest_at);
  }
  if (count < 0 || width < 0) throw FormatError("manifest: negative count or width", manifest_at);
  bank.features.resize(count, width);
  bank.labels.resize(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto label = r.u32("row " + std::to_string(i) + " label");
    bank.labels[static_cast<std::size_t>(i)] = label == 0xFFFFFFFFu ? kUnlabeledRow : static_cast<int>(label);
    r.f32(std::span<float>(bank.features.row(i).data(), static_cast<std::size_t>(width)),
          "row " + std::to_string(i) + " features");
  }
  if (!r.at_end()) throw FormatError("trailing bytes after " + std::to_string(count) + " rows", r.offset());
  return bank;
}

FeatureBank read_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature bank " + path.string());
  return read_bank(in);
}

std::vector<int> LinearClassifier::predict(const MatrixF& features) const {
  MatrixF z = (features.rowwise() - mean.row(0)).array().rowwise() * scale.row(0).array();
  MatrixF logits = z * weight;
  logits.rowwise() += bias.row(0);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_row(logits, i);
  return out;
}

LinearClassifier train_linear_classifier(const FeatureBank& train, const ProbeConfig& cfg) {
  require_labeled(train, "training");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0)) throw ConfigError("probe: invalid optimizer settings");
  const int n_classes = class_count(train.labels, train.class_names.size());
  if (std::set<int>(train.labels.begin(), train.labels.end()).size() < 2) {
    throw ConfigError("linear_probe: training bank has a single class");
  }
  const auto n = train.size();
  const auto width = train.features.cols();

  LinearClassifier clf;
  clf.mean = train.features.colwise().mean();
  const MatrixF centered = train.features.rowwise() - clf.mean.row(0);
  clf.scale.resize(1, width);
  for (Eigen::Index j = 0; j < width; ++j) {
    const float sd = std::sqrt(centered.col(j).squaredNorm() / static_cast<float>(n));
    clf.scale(0, j) = sd > 1e-6f ? 1.0f / sd : 1.0f;
  }
  const MatrixF z = centered.array().rowwise() * clf.scale.row(0).array();

  ParameterStore params;
  auto w = params.add("head.weight", MatrixF::Zero(width, n_classes));
  auto b = params.add("head.bias", MatrixF::Zero(1, n_classes));
  Adam opt(params);
  Rng rng(cfg.seed);
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(static_cast<std::size_t>(n), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::span<const std::size_t> rows(order.data() + begin, std::min(batch, order.size() - begin));
      std::vector<int> labels;
      for (auto r : rows) labels.push_back(train.labels[r]);
      const auto logits = ag::linear(ag::Var(gather_rows(z, rows)), w, b);
      params.zero_grad();
      ag::backward(ag::softmax_cross_entropy(logits, labels));
      opt.step(params, cfg.lr, 0.0);
    }
  }
  clf.weight = w.value();
  clf.bias = b.value();
  return clf;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: prediction and label counts differ");
  if (labels.empty()) throw ConfigError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg) {
  require_labeled(test, "test");
  if (train.features.cols() != test.features.cols()) throw ShapeError("linear_probe: bank widths differ");
  const auto clf = train_linear_classifier(train, cfg);
  return accuracy(clf.predict(test.features), test.labels);
}

std::vector<int> knn_predict(const FeatureBank& train, const MatrixF& queries, const KnnConfig& cfg) {
  require_labeled(train, "training");
  if (cfg.k < 1) throw ConfigError("knn: k must be >= 1");
  const auto available = train.size() - (cfg.exclude_self ? 1 : 0);
  if (cfg.k > available) {
    throw ConfigError("knn: k=" + std::to_string(cfg.k) + " exceeds the " + std::to_string(available) +
                      " available training rows");
  }
  if (train.features.cols() != queries.cols()) throw ShapeError("knn: feature widths differ");
  if (cfg.exclude_self && queries.rows() != train.size()) {
    throw ShapeError("knn: exclude_self needs queries aligned with the training bank");
  }

  auto normalize = [](const MatrixF& x) {
    MatrixF out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const float norm = out.row(i).norm();
      if (norm > 0) out.row(i) /= norm;
    }
    return out;
  };
  const MatrixF a = normalize(train.features);
  const MatrixF q = normalize(queries);
  const MatrixF sim = q * a.transpose();

  std::vector<int> out(static_cast<std::size_t>(queries.rows()));
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    idx.resize(static_cast<std::size_t>(train.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (cfg.exclude_self) idx.erase(idx.begin() + i);
    // Higher similarity first; equal similarity keeps the lower index.
    std::partial_sort(idx.begin(), idx.begin() + cfg.k, idx.end(), [&](Eigen::Index x, Eigen::Index y) {
      const float sx = sim(i, x);
      const float sy = sim(i, y);
      return sx > sy || (sx == sy && x < y);
    });
    std::map<int, int> votes;
    for (int j = 0; j < cfg.k; ++j) ++votes[train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]];
    int best = 0;
    for (const auto& [label, count] : votes) best = std::max(best, count);
    for (int j = 0; j < cfg.k; ++j) {
      const int label = train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
      if (votes[label] == best) {
        out[static_cast<std::size_t>(i)] = label;
        break;
      }
    }
  }
  return out;
}

double knn_retrieve(const FeatureBank& train, const FeatureBank& test, const KnnConfig& cfg) {
  require_labeled(test, "test");
  return accuracy(knn_predict(train, test.features, cfg), test.labels);
}

SubsetSelection select_labeled_subset(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("fraction must be in (0, 1]");
  std::map<int, std::vector<std::size_t>> by_class;
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    if (const auto& l = dataset.sequences[i].label) {
      by_class[*l].push_back(i);
      labeled.push_back(i);
    }
  }
  if (labeled.empty()) throw ConfigError("select_labeled_subset: dataset has no labeled sequences");

  Rng rng(seed);
  SubsetSelection sel;
  bool starved = false;
  for (const auto& [label, members] : by_class) {
    if (std::llround(fraction * static_cast<double>(members.size())) == 0) starved = true;
  }
  if (!starved) {
    for (auto& [label, members] : by_class) {
      auto pool = members;
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size()))));
      sel.indices.insert(sel.indices.end(), pool.begin(), pool.end());
    }
  } else {
    std::cerr << "warning: fraction " << fraction
              << " leaves some class without samples; selecting without stratification\n";
    sel.stratified = false;
    auto pool = labeled;
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n = std::max<long long>(1, std::llround(fraction * static_cast<double>(pool.size())));
    pool.resize(static_cast<std::size_t>(n));
    sel.indices = std::move(pool);
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

double finetune(const Model& model, const Dataset& train, const Dataset& test, const FinetuneConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0)) throw ConfigError("finetune: invalid optimizer settings");
  for (const Dataset* d : {&train, &test}) {
    if (d->topology.n_joints() != model.config().joints) {
      throw ConfigError("finetune: dataset has " + std::to_string(d->topology.n_joints()) +
                        " joints but the model expects " + std::to_string(model.config().joints));
    }
  }
  const auto train_labels = dataset_labels(train);
  const auto test_labels = dataset_labels(test);
  if (train_labels.empty() || test_labels.empty()) throw ConfigError("finetune: empty train or test set");
  for (const auto* labels : {&train_labels, &test_labels}) {
    if (std::find(labels->begin(), labels->end(), kUnlabeledRow) != labels->end()) {
      throw ConfigError("finetune: every sequence needs a label");
    }
  }
  const int n_classes = std::max(class_count(train_labels, train.class_names.size()),
                                 class_count(test_labels, test.class_names.size()));

  Model net = model.clone();
  auto& params = net.parameters();
  const int width = 2 * net.config().dim;
  Rng init(cfg.seed ^ 0x5EEDULL);
  const float bound = std::sqrt(6.0f / static_cast<float>(width + n_classes));
  std::uniform_real_distribution<float> u(-bound, bound);
  MatrixF w0(width, n_classes);
  for (Eigen::Index i = 0; i < w0.size(); ++i) w0.data()[i] = u(init);
  auto w = params.add("head.weight", std::move(w0));
  auto b = params.add("head.bias", MatrixF::Zero(1, n_classes));
  Adam opt(params);

  const int frames = net.config().frames;
  const auto train_bundles = eval_bundles(train, frames, 0, train.sequences.size());
  Rng rng(cfg.seed);
  const auto batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train_bundles.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(train_bundles.size(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<ModalityBundle> xs;
      std::vector<int> labels;
      for (std::size_t i = begin; i < end; ++i) {
        xs.push_back(train_bundles[order[i]]);
        labels.push_back(train_labels[order[i]]);
      }
      const auto logits = ag::linear(net.unified(xs, cfg.modalities), w, b);
      const auto loss = ag::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.value()(0, 0))) {
        throw NumericalError("finetune: non-finite loss at epoch " + std::to_string(epoch));
      }
      params.zero_grad();
      ag::backward(loss);
      opt.step(params, cfg.lr, cfg.weight_decay);
    }
  }

  std::vector<int> predicted;
  predicted.reserve(test_labels.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < test.sequences.size(); begin += kChunk) {
    const std::size_t end = std::min(test.sequences.size(), begin + kChunk);
    const auto xs = eval_bundles(test, frames, begin, end);
    const auto logits = ag::linear(net.unified(xs, cfg.modalities).detach(), w.detach(), b.detach());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) predicted.push_back(argmax_row(logits.value(), i));
  }
  return accuracy(predicted, test_labels);
}

SemiSupervisedResult semi_supervised(const Model& model, const Dataset& train, const Dataset& test, double fraction,
                                     const FinetuneConfig& cfg) {
  SemiSupervisedResult result;
  result.selection = select_labeled_subset(train, fraction, cfg.seed);
  Dataset subset;
  subset.topology = train.topology;
  subset.class_names = train.class_names;
  for (auto i : result.selection.indices) subset.sequences.push_back(train.sequences[i]);
  result.accuracy = finetune(model, subset, test, cfg);
  return result;
}

Dataset remap_joints(const Dataset& dataset, const JointMapping& mapping) {
  mapping.topology.validate();
  if (static_cast<int>(mapping.source_joint.size()) != mapping.topology.n_joints()) {
    throw ConfigError("joint mapping: source_joint has " + std::to_string(mapping.source_joint.size()) +
                      " entries but the target topology has " + std::to_string(mapping.topology.n_joints()) +
                      " joints");
  }
  const int src_joints = dataset.topology.n_joints();
  for (int s : mapping.source_joint) {
    if (s < 0 || s >= src_joints) throw ConfigError("joint mapping: source joint " + std::to_string(s) + " out of range");
  }
  Dataset out;
  out.topology = mapping.topology;
  out.class_names = dataset.class_names;
  const int V = mapping.topology.n_joints();
  for (const auto& seq : dataset.sequences) {
    SkeletonSequence mapped = seq;
    const int C = seq.coords.channels();
    const int T = seq.coords.frames();
    mapped.coords = Coords(C, V, T);
    for (int c = 0; c < C; ++c) {
      for (int v = 0; v < V; ++v) {
        for (int t = 0; t < T; ++t) mapped.coords(c, v, t) = seq.coords(c, mapping.source_joint[static_cast<std::size_t>(v)], t);
      }
    }
    out.sequences.push_back(std::move(mapped));
  }
  return out;
}

double transfer(const Model& model, const Dataset& train_b, const Dataset& test_b, const FinetuneConfig& cfg,
                const std::optional<JointMapping>& mapping) {
  if (mapping) return finetune(model, remap_joints(train_b, *mapping), remap_joints(test_b, *mapping), cfg);
  if (train_b.topology.n_joints() != model.config().joints) {
    throw ConfigError("transfer: target dataset has " + std::to_string(train_b.topology.n_joints()) +
                      " joints, the pretrained model " + std::to_string(model.config().joints) +
                      "; supply a joint mapping");
  }
  return finetune(model, train_b, test_b, cfg);
}

void append_accuracy_csv(const std::filesystem::path& path, const AccuracyRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot open " + path.string() + " for appending");
  if (fresh) out << "protocol,dataset,modality_subset,fraction,seed,accuracy\n";
  auto field = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char ch : s) {
      if (ch == '"') quoted += '"';
      quoted += ch;
    }
    return quoted + "\"";
  };
  out << field(row.protocol) << ',' << field(row.dataset) << ',' << field(row.modality_subset) << ','
      << row.fraction << ',' << row.seed << ',' << row.accuracy << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace dcc
