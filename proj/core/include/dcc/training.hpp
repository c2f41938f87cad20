#pragma once

#include "dcc/augment.hpp"
#include "dcc/losses.hpp"
#include "dcc/model.hpp"
#include "dcc/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dcc {

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 30;
  double base_lr = 5e-4;
  double drop_lr = 5e-5;
  int drop_epoch = 24;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  bool multiview = true;
  /// Save a checkpoint every N epochs (0: only at the end).
  int checkpoint_every = 0;
  /// Emit one metrics line per optimizer step in addition to per epoch.
  bool log_steps = false;
  /// Threads used to sample and augment a batch.
  int workers = 1;
  LossConfig loss;
  AugmentationConfig augmentation;
  ModelConfig model;

  void validate() const;

  /// Laptop-sized run on synthetic 11-joint data, lambda = D.
  static TrainConfig desk();
  /// NTU-60/120 schedule: 64 frames, batch 512, 450 epochs, drop at 350.
  static TrainConfig full_scale_ntu();
  /// PKU-MMD II schedule: 1000 epochs, drop at 800.
  static TrainConfig full_scale_pku();
};

/// base_lr before drop_epoch, drop_lr from drop_epoch on.
double lr_schedule(int epoch, const TrainConfig& cfg);

/// Adam with decoupled weight decay.
class Adam {
 public:
  struct Moments {
    MatrixF m;
    MatrixF v;
  };

  explicit Adam(const ParameterStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the gradients currently stored on `params`.
  /// Parameters without a gradient are left untouched.
  void step(ParameterStore& params, double lr, double weight_decay);

  std::int64_t steps() const { return steps_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }
  std::vector<Moments>& moments() { return moments_; }
  const std::vector<Moments>& moments() const { return moments_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t steps_ = 0;
  std::vector<Moments> moments_;
};

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double d_temporal = 0.0;
  double d_spatial = 0.0;
  double d_global = 0.0;
  double decomposition = 0.0;
  double composition = 0.0;
  double regularization = 0.0;
  double total = 0.0;
  int batches = 0;
};

struct PretrainOptions {
  /// Final (and periodic) checkpoint location; empty disables writing.
  std::filesystem::path checkpoint_path;
  /// JSON-lines metrics file; empty disables writing.
  std::filesystem::path metrics_path;
  /// Continue from a checkpoint written by an earlier run.
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many completed epochs (for interrupted-run tests).
  std::optional<int> stop_after_epoch;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct PretrainResult {
  Model model;
  Adam optimizer;
  int epochs_completed = 0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
};

/// Combines the two directions of a positive pair: for direction a->b the
/// unimodal and composed targets come from `b` and the fused-path
/// projections from `a`.
ProjectedVars cross_pair(const ProjectedVars& a, const ProjectedVars& b);

/// Symmetrized loss over a positive pair, with the gradient seeds for a
/// single backward pass.
LossBreakdown pair_loss(const ProjectedVars& a, const ProjectedVars& b, const LossConfig& cfg,
                        std::vector<std::pair<ag::Var, MatrixF>>* seeds);

/// Self-supervised pretraining on viewpoint-paired batches.
PretrainResult pretrain(const Dataset& dataset, const TrainConfig& cfg, const PretrainOptions& options = {});

/// One JSON object per line: {"epoch", "step", "L_d_t", "L_d_s", "L_d_g",
/// "L_d", "L_c", "L_reg", "total", "lr", "alpha", "beta"}.
std::string metrics_line(const StepRecord& rec, const LossConfig& cfg);
std::string metrics_line(const EpochRecord& rec, const LossConfig& cfg);

void save_training_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer,
                              const TrainConfig& cfg, int epochs_completed);

}  // namespace dcc
