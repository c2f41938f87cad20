#pragma once

#include "dcc/model.hpp"
#include "dcc/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcc {

inline constexpr char kBankMagic[8] = {'F', 'B', 'K', 'S', 'E', 'T', '\x01', '\x00'};
inline constexpr int kUnlabeledRow = -1;

/// Frozen features, one row per sequence.
struct FeatureBank {
  MatrixF features;
  std::vector<int> labels;  ///< kUnlabeledRow for sequences without a label
  std::string split;
  std::vector<Modality> modality_subset;
  std::vector<std::string> class_names;

  Eigen::Index size() const { return features.rows(); }
  bool fully_labeled() const;
  bool operator==(const FeatureBank& other) const = default;
};

/// Center on the root, resample uniformly to the model's frame count, then
/// take the unified feature for `subset`. Rows follow dataset order.
FeatureBank extract_bank(const Model& model, const Dataset& dataset, const std::vector<Modality>& subset,
                         const std::string& split = "", int chunk = 256);

/// magic | u32 manifest length | JSON manifest {count, width,
/// modality_subset, split, class_names} | per row: u32 label, width float32.
void write_bank(std::ostream& out, const FeatureBank& bank);
void write_bank(const std::filesystem::path& path, const FeatureBank& bank);
FeatureBank read_bank(std::istream& in);
FeatureBank read_bank(const std::filesystem::path& path);

struct ProbeConfig {
  int epochs = 100;
  double lr = 1e-2;
  int batch_size = 256;
  std::uint64_t seed = 0;
};

/// Affine classifier on standardized features.
struct LinearClassifier {
  MatrixF mean;    ///< (1, width)
  MatrixF scale;   ///< (1, width), 1 / std
  MatrixF weight;  ///< (width, classes)
  MatrixF bias;    ///< (1, classes)

  std::vector<int> predict(const MatrixF& features) const;
};

LinearClassifier train_linear_classifier(const FeatureBank& train, const ProbeConfig& cfg = {});

/// Fraction of rows whose prediction equals the label.
double accuracy(std::span<const int> predicted, std::span<const int> labels);

/// Cross-entropy linear classifier on frozen features; top-1 test accuracy.
double linear_probe(const FeatureBank& train, const FeatureBank& test, const ProbeConfig& cfg = {});

struct KnnConfig {
  int k = 1;
  /// Skip train row i when classifying test row i (self-retrieval).
  bool exclude_self = false;
};

/// Cosine-similarity neighbors; majority vote over the k nearest with ties
/// broken by the nearest tied class.
std::vector<int> knn_predict(const FeatureBank& train, const MatrixF& queries, const KnnConfig& cfg = {});
double knn_retrieve(const FeatureBank& train, const FeatureBank& test, const KnnConfig& cfg = {});

struct FinetuneConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch_size = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::vector<Modality> modalities{Modality::joint, Modality::bone, Modality::motion};
};

struct SubsetSelection {
  std::vector<std::size_t> indices;  ///< sorted sequence indices
  bool stratified = true;
};

/// Seeded per-class selection of round(fraction * n_c) labeled sequences.
/// Falls back to a plain random draw of round(fraction * N) (at least 1)
/// when some class would get zero samples.
SubsetSelection select_labeled_subset(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Attaches a fresh linear head to a copy of `model`, trains every
/// parameter on `train`, and returns top-1 accuracy on `test`.
double finetune(const Model& model, const Dataset& train, const Dataset& test, const FinetuneConfig& cfg);

struct SemiSupervisedResult {
  double accuracy = 0.0;
  SubsetSelection selection;
};

SemiSupervisedResult semi_supervised(const Model& model, const Dataset& train, const Dataset& test, double fraction,
                                     const FinetuneConfig& cfg);

/// Maps a dataset onto a model skeleton: target joint j takes source joint
/// source_joint[j]; `topology` is the target tree.
struct JointMapping {
  std::vector<int> source_joint;
  SkeletonTopology topology;
};

Dataset remap_joints(const Dataset& dataset, const JointMapping& mapping);

/// Full fine-tune of a model pretrained elsewhere on dataset B. Joint counts
/// must match unless a mapping is given.
double transfer(const Model& model, const Dataset& train_b, const Dataset& test_b, const FinetuneConfig& cfg,
                const std::optional<JointMapping>& mapping = std::nullopt);

struct AccuracyRow {
  std::string protocol;
  std::string dataset;
  std::string modality_subset;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

/// Appends one row, writing the header first when the file is new or empty.
void append_accuracy_csv(const std::filesystem::path& path, const AccuracyRow& row);

}  // namespace dcc
