#pragma once

#include "dcc/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dcc {

enum class Modality : std::uint8_t { joint = 0, bone = 1, motion = 2 };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::joint, Modality::bone, Modality::motion};

std::string_view to_string(Modality m);
/// Single-letter code used on the command line: J, B or M.
char modality_code(Modality m);
/// Parses "J,M,B" (order-insensitive, duplicates rejected) into canonical
/// joint/bone/motion order.
std::vector<Modality> parse_modalities(std::string_view text);
std::string format_modalities(std::span<const Modality> ms);

/// Dense (C, V, T) float array: C outer, V middle, T inner.
class Coords {
 public:
  Coords() = default;
  Coords(int channels, int joints, int frames);

  int channels() const { return channels_; }
  int joints() const { return joints_; }
  int frames() const { return frames_; }
  std::size_t size() const { return data_.size(); }

  float& operator()(int c, int v, int t) { return data_[index(c, v, t)]; }
  float operator()(int c, int v, int t) const { return data_[index(c, v, t)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool all_finite() const;
  bool operator==(const Coords& other) const = default;

 private:
  std::size_t index(int c, int v, int t) const {
    return (static_cast<std::size_t>(c) * joints_ + static_cast<std::size_t>(v)) * frames_ +
           static_cast<std::size_t>(t);
  }

  int channels_ = 0;
  int joints_ = 0;
  int frames_ = 0;
  std::vector<float> data_;
};

/// One recorded clip. Sequences sharing performance_id are simultaneous
/// recordings from different cameras.
struct SkeletonSequence {
  Coords coords;
  std::optional<int> label;
  int subject_id = 0;
  int performance_id = 0;
  int camera_id = 0;

  bool operator==(const SkeletonSequence& other) const = default;
};

/// Throws ShapeError unless C == 3, V >= 2, T >= 1 and every value is finite.
void validate(const SkeletonSequence& seq);

/// Joint tree. parent[root] == root.
struct SkeletonTopology {
  std::vector<int> parent;

  int n_joints() const { return static_cast<int>(parent.size()); }
  int root() const;
  /// Single tree check: exactly one root and every joint reaches it.
  void validate() const;
  /// Joints ordered so each parent precedes its children.
  std::vector<int> topological_order() const;

  /// Kinect v2 25-joint layout, rooted at spine base (joint 0).
  static SkeletonTopology ntu25();
  /// 11-joint body used by the synthetic generator.
  static SkeletonTopology body11();
  /// Heap-ordered binary tree over V joints (parent of v is (v-1)/2).
  static SkeletonTopology binary_tree(int n_joints);

  bool operator==(const SkeletonTopology& other) const = default;
};

/// bone[:, v, t] = joint[:, v, t] - joint[:, parent[v], t]; zero at the root.
Coords derive_bone(const Coords& joint, const SkeletonTopology& topology);
/// Forward difference along t with a zero final frame.
Coords derive_motion(const Coords& joint);
Coords derive(Modality m, const Coords& joint, const SkeletonTopology& topology);

/// Temporal view (T, V*C) with x_t[t, v*C + c] and spatial view (V, T*C)
/// with x_s[v, t*C + c].
struct Views {
  MatrixF temporal;
  MatrixF spatial;
};

Views make_views(const Coords& x);
Coords from_temporal_view(const MatrixF& temporal, int channels);
Coords from_spatial_view(const MatrixF& spatial, int channels);

/// Both views of all three modalities of one clip, indexed by Modality.
struct ModalityBundle {
  std::array<Views, 3> views;

  const Views& operator[](Modality m) const { return views[static_cast<std::size_t>(m)]; }
  Views& operator[](Modality m) { return views[static_cast<std::size_t>(m)]; }
};

ModalityBundle make_bundle(const Coords& joint, const SkeletonTopology& topology);

/// Translates every frame so the root joint of frame 0 sits at the origin.
void center_on_root(Coords& coords, const SkeletonTopology& topology);

/// Linear interpolation of frames [begin, begin + length) onto `frames_out`
/// evenly spaced samples.
Coords resample(const Coords& x, double begin, double length, int frames_out);
/// Deterministic resample of the whole clip (evaluation preprocessing).
Coords resample_uniform(const Coords& x, int frames_out);

struct Dataset {
  std::vector<SkeletonSequence> sequences;
  SkeletonTopology topology;
  std::vector<std::string> class_names;

  bool operator==(const Dataset& other) const = default;
  int max_frames() const;
  /// Number of distinct labels in use (max label + 1).
  int n_classes() const;
};

}  // namespace dcc
