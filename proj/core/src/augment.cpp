#include "dcc/augment.hpp"

#include "dcc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dcc {

void AugmentationConfig::validate() const {
  if (frames_out < 2) throw ConfigError("augmentation: frames_out must be >= 2");
  if (crop && !(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) {
    throw ConfigError("augmentation: crop range must satisfy 0 < min <= max <= 1");
  }
  if (rotate && !(rotation_max > 0.0)) throw ConfigError("augmentation: rotation_max must be > 0 when enabled");
  if (shear && !(shear_max > 0.0)) throw ConfigError("augmentation: shear_max must be > 0 when enabled");
  if (jitter && !(jitter_sd > 0.0)) throw ConfigError("augmentation: jitter_sd must be > 0 when enabled");
}

AugmentationConfig AugmentationConfig::identity(int frames_out) {
  AugmentationConfig cfg;
  cfg.crop = cfg.rotate = cfg.shear = cfg.jitter = false;
  cfg.frames_out = frames_out;
  return cfg;
}

namespace {

void apply_linear(Coords& x, const Eigen::Matrix3d& m) {
  for (int v = 0; v < x.joints(); ++v) {
    for (int t = 0; t < x.frames(); ++t) {
      const Eigen::Vector3d p(x(0, v, t), x(1, v, t), x(2, v, t));
      const Eigen::Vector3d q = m * p;
      for (int c = 0; c < 3; ++c) x(c, v, t) = static_cast<float>(q[c]);
    }
  }
}

}  // namespace

Coords rotate(const Coords& x, double ax, double ay, double az) {
  if (x.channels() != 3) throw ShapeError("rotate: C must be 3");
  const Eigen::Matrix3d r = (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) *
                             Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
                             Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()))
                                .toRotationMatrix();
  Coords out = x;
  apply_linear(out, r);
  return out;
}

SkeletonSequence augment(const SkeletonSequence& seq, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  SkeletonSequence out = seq;
  const int T = seq.coords.frames();

  double begin = 0.0;
  double length = T;
  if (cfg.crop) {
    std::uniform_real_distribution<double> ratio(cfg.crop_min, cfg.crop_max);
    const int len = std::min(T, std::max(2, static_cast<int>(std::lround(ratio(rng) * T))));
    std::uniform_int_distribution<int> start(0, std::max(0, T - len));
    begin = start(rng);
    length = len;
  }
  out.coords = resample(seq.coords, begin, length, cfg.frames_out);

  if (cfg.rotate) {
    std::uniform_real_distribution<double> angle(-cfg.rotation_max, cfg.rotation_max);
    const double ax = angle(rng);
    const double ay = angle(rng);
    const double az = angle(rng);
    out.coords = rotate(out.coords, ax, ay, az);
  }
  if (cfg.shear) {
    std::uniform_real_distribution<double> s(-cfg.shear_max, cfg.shear_max);
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) m(i, j) = s(rng);
      }
    }
    apply_linear(out.coords, m);
  }
  if (cfg.jitter) {
    std::normal_distribution<double> noise(0.0, cfg.jitter_sd);
    for (auto& v : out.coords.data()) v += static_cast<float>(noise(rng));
  }
  return out;
}

SkeletonSequence prepare_train(const SkeletonSequence& seq, const SkeletonTopology& topology,
                               const AugmentationConfig& cfg, Rng& rng) {
  SkeletonSequence centered = seq;
  center_on_root(centered.coords, topology);
  return augment(centered, cfg, rng);
}

SkeletonSequence prepare_eval(const SkeletonSequence& seq, const SkeletonTopology& topology, int frames_out) {
  SkeletonSequence out = seq;
  center_on_root(out.coords, topology);
  out.coords = resample_uniform(out.coords, frames_out);
  return out;
}

}  // namespace dcc
