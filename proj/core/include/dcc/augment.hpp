#pragma once

#include "dcc/skeleton.hpp"

#include <random>

namespace dcc {

using Rng = std::mt19937_64;

/// Training-time augmentation. Each stage can be switched off on its own;
/// with everything off and frames_out == T the output equals the input.
struct AugmentationConfig {
  bool crop = true;
  double crop_min = 0.5;  ///< fraction of the clip kept by the temporal crop
  double crop_max = 1.0;
  bool rotate = true;
  double rotation_max = 0.3;  ///< radians, drawn independently per axis
  bool shear = true;
  double shear_max = 0.5;
  bool jitter = true;
  double jitter_sd = 0.01;  ///< meters
  int frames_out = 64;

  void validate() const;
  static AugmentationConfig identity(int frames_out);
};

/// Crop + resize, rotation, shear, jitter, in that order. Metadata is kept.
SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng);

/// Rotation R = Rz * Ry * Rx applied to every joint of every frame.
Coords rotate(const Coords& x, double ax, double ay, double az);

/// Centers on the root joint, then augments.
SkeletonSequence prepare_train(const SkeletonSequence& seq, const SkeletonTopology& topology,
                               const AugmentationConfig& cfg, Rng& rng);
/// Centers on the root joint, then resamples the full clip to frames_out.
SkeletonSequence prepare_eval(const SkeletonSequence& seq, const SkeletonTopology& topology, int frames_out);

}  // namespace dcc
