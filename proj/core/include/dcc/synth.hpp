#pragma once

#include "dcc/skeleton.hpp"

#include <cstdint>

namespace dcc {

/// Parameters of the synthetic multi-view action generator.
struct SynthConfig {
  int n_classes = 4;
  int n_performances = 100;
  int n_views = 2;
  int n_joints = 11;
  int n_frames = 16;
  double noise_sd = 0.02;
  /// Amplitude bound of the per-performance idiosyncratic joint motion
  /// layered on top of the class program.
  double style_amplitude = 1.0;
  /// Each performance faces a yaw drawn from [-facing_range, facing_range].
  double facing_range = 1.5;
  int n_subjects = 8;
  std::uint64_t seed = 0;
  /// Seeds the per-class motion programs. Two datasets generated with the
  /// same class_seed share classes; different class_seeds draw new classes
  /// from the same primitive vocabulary.
  std::uint64_t class_seed = 0;

  void validate() const;
};

/// Each class is a fixed set of per-joint oscillations (axis, amplitude,
/// frequency, phase) applied through forward kinematics on a V-joint tree.
/// A performance perturbs amplitude, tempo and time offset, scales the body
/// by a per-subject factor, adds its own random joint oscillations and a
/// random facing direction, and is rendered from n_views yaw-rotated cameras
/// with independent Gaussian noise. label = performance % n_classes.
Dataset synth_generate(const SynthConfig& cfg);

/// Body used for a given joint count: body11 for 11 joints, a binary tree otherwise.
SkeletonTopology synth_topology(int n_joints);

/// Moves every sequence whose performance_id >= n_train_performances into
/// the returned dataset.
Dataset split_off_performances(Dataset& dataset, int n_train_performances);

}  // namespace dcc
