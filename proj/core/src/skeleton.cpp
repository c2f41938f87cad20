#include "dcc/skeleton.hpp"

#include "dcc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dcc {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::joint:
      return "joint";
    case Modality::bone:
      return "bone";
    case Modality::motion:
      return "motion";
  }
  return "?";
}

char modality_code(Modality m) {
  switch (m) {
    case Modality::joint:
      return 'J';
    case Modality::bone:
      return 'B';
    case Modality::motion:
      return 'M';
  }
  return '?';
}

std::vector<Modality> parse_modalities(std::string_view text) {
  std::array<bool, 3> seen{};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    auto token = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    Modality m;
    if (token == "J" || token == "j" || token == "joint") {
      m = Modality::joint;
    } else if (token == "B" || token == "b" || token == "bone") {
      m = Modality::bone;
    } else if (token == "M" || token == "m" || token == "motion") {
      m = Modality::motion;
    } else {
      throw ConfigError("unknown modality '" + std::string(token) + "'");
    }
    auto& flag = seen[static_cast<std::size_t>(m)];
    if (flag) throw ConfigError("modality listed twice: " + std::string(token));
    flag = true;
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::vector<Modality> out;
  for (auto m : kAllModalities) {
    if (seen[static_cast<std::size_t>(m)]) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("empty modality list");
  return out;
}

std::string format_modalities(std::span<const Modality> ms) {
  std::string out;
  for (auto m : ms) {
    if (!out.empty()) out += '+';
    out += modality_code(m);
  }
  return out;
}

Coords::Coords(int channels, int joints, int frames)
    : channels_(channels), joints_(joints), frames_(frames) {
  if (channels < 0 || joints < 0 || frames < 0) throw ShapeError("Coords: negative dimension");
  data_.assign(static_cast<std::size_t>(channels) * joints * frames, 0.0f);
}

bool Coords::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void validate(const SkeletonSequence& seq) {
  const auto& x = seq.coords;
  if (x.channels() != 3) throw ShapeError("sequence must have C = 3, got " + std::to_string(x.channels()));
  if (x.joints() < 2) throw ShapeError("sequence must have V >= 2");
  if (x.frames() < 1) throw ShapeError("sequence must have T >= 1");
  if (!x.all_finite()) throw ShapeError("sequence contains NaN/Inf coordinates");
  if (seq.label && *seq.label < 0) throw ShapeError("negative label");
}

int SkeletonTopology::root() const {
  for (int v = 0; v < n_joints(); ++v) {
    if (parent[static_cast<std::size_t>(v)] == v) return v;
  }
  throw SchemaError("topology has no root");
}

void SkeletonTopology::validate() const {
  const int n = n_joints();
  if (n < 1) throw SchemaError("topology has no joints");
  int roots = 0;
  for (int v = 0; v < n; ++v) {
    const int p = parent[static_cast<std::size_t>(v)];
    if (p < 0 || p >= n) throw SchemaError("parent of joint " + std::to_string(v) + " out of range");
    if (p == v) ++roots;
  }
  if (roots != 1) throw SchemaError("topology must have exactly one root, found " + std::to_string(roots));
  for (int v = 0; v < n; ++v) {
    int cur = v;
    for (int steps = 0; parent[static_cast<std::size_t>(cur)] != cur; ++steps) {
      if (steps > n) throw SchemaError("cycle through joint " + std::to_string(v));
      cur = parent[static_cast<std::size_t>(cur)];
    }
  }
}

std::vector<int> SkeletonTopology::topological_order() const {
  const int n = n_joints();
  std::vector<int> depth(static_cast<std::size_t>(n), 0);
  for (int v = 0; v < n; ++v) {
    int cur = v;
    int d = 0;
    while (parent[static_cast<std::size_t>(cur)] != cur && d <= n) {
      cur = parent[static_cast<std::size_t>(cur)];
      ++d;
    }
    depth[static_cast<std::size_t>(v)] = d;
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) order[static_cast<std::size_t>(v)] = v;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return depth[static_cast<std::size_t>(a)] < depth[static_cast<std::size_t>(b)]; });
  return order;
}

SkeletonTopology SkeletonTopology::ntu25() {
  // 0 spine base, 1 spine mid, 2 neck, 3 head, 4-7 left arm, 8-11 right arm,
  // 12-15 left leg, 16-19 right leg, 20 spine shoulder, 21-22 left hand
  // tip/thumb, 23-24 right hand tip/thumb.
  return {{0, 0, 20, 2, 20, 4, 5, 6, 20, 8, 9, 10, 0, 12, 13, 14, 0, 16, 17, 18, 1, 7, 7, 11, 11}};
}

SkeletonTopology SkeletonTopology::body11() {
  // 0 pelvis, 1 chest, 2 head, 3/4 left elbow/hand, 5/6 right elbow/hand,
  // 7/8 left knee/foot, 9/10 right knee/foot.
  return {{0, 0, 1, 1, 3, 1, 5, 0, 7, 0, 9}};
}

SkeletonTopology SkeletonTopology::binary_tree(int n_joints) {
  SkeletonTopology t;
  t.parent.resize(static_cast<std::size_t>(n_joints));
  for (int v = 0; v < n_joints; ++v) t.parent[static_cast<std::size_t>(v)] = v == 0 ? 0 : (v - 1) / 2;
  return t;
}

Coords derive_bone(const Coords& joint, const SkeletonTopology& topology) {
  if (topology.n_joints() != joint.joints()) {
    throw ShapeError("derive_bone: topology has " + std::to_string(topology.n_joints()) + " joints, array has " +
                     std::to_string(joint.joints()));
  }
  Coords bone(joint.channels(), joint.joints(), joint.frames());
  for (int c = 0; c < joint.channels(); ++c) {
    for (int v = 0; v < joint.joints(); ++v) {
      const int p = topology.parent[static_cast<std::size_t>(v)];
      if (p == v) continue;
      for (int t = 0; t < joint.frames(); ++t) bone(c, v, t) = joint(c, v, t) - joint(c, p, t);
    }
  }
  return bone;
}

Coords derive_motion(const Coords& joint) {
  Coords motion(joint.channels(), joint.joints(), joint.frames());
  for (int c = 0; c < joint.channels(); ++c) {
    for (int v = 0; v < joint.joints(); ++v) {
      for (int t = 0; t + 1 < joint.frames(); ++t) motion(c, v, t) = joint(c, v, t + 1) - joint(c, v, t);
    }
  }
  return motion;
}

Coords derive(Modality m, const Coords& joint, const SkeletonTopology& topology) {
  switch (m) {
    case Modality::joint:
      return joint;
    case Modality::bone:
      return derive_bone(joint, topology);
    case Modality::motion:
      return derive_motion(joint);
  }
  return joint;
}

Views make_views(const Coords& x) {
  const int C = x.channels();
  const int V = x.joints();
  const int T = x.frames();
  Views out{MatrixF(T, V * C), MatrixF(V, T * C)};
  for (int c = 0; c < C; ++c) {
    for (int v = 0; v < V; ++v) {
      for (int t = 0; t < T; ++t) {
        const float value = x(c, v, t);
        out.temporal(t, v * C + c) = value;
        out.spatial(v, t * C + c) = value;
      }
    }
  }
  return out;
}

Coords from_temporal_view(const MatrixF& temporal, int channels) {
  if (channels <= 0 || temporal.cols() % channels != 0) throw ShapeError("temporal view width not a multiple of C");
  const int T = static_cast<int>(temporal.rows());
  const int V = static_cast<int>(temporal.cols()) / channels;
  Coords x(channels, V, T);
  for (int c = 0; c < channels; ++c) {
    for (int v = 0; v < V; ++v) {
      for (int t = 0; t < T; ++t) x(c, v, t) = temporal(t, v * channels + c);
    }
  }
  return x;
}

Coords from_spatial_view(const MatrixF& spatial, int channels) {
  if (channels <= 0 || spatial.cols() % channels != 0) throw ShapeError("spatial view width not a multiple of C");
  const int V = static_cast<int>(spatial.rows());
  const int T = static_cast<int>(spatial.cols()) / channels;
  Coords x(channels, V, T);
  for (int c = 0; c < channels; ++c) {
    for (int v = 0; v < V; ++v) {
      for (int t = 0; t < T; ++t) x(c, v, t) = spatial(v, t * channels + c);
    }
  }
  return x;
}

ModalityBundle make_bundle(const Coords& joint, const SkeletonTopology& topology) {
  ModalityBundle bundle;
  for (auto m : kAllModalities) bundle[m] = make_views(derive(m, joint, topology));
  return bundle;
}

void center_on_root(Coords& coords, const SkeletonTopology& topology) {
  if (coords.frames() == 0) return;
  const int root = topology.root();
  for (int c = 0; c < coords.channels(); ++c) {
    const float origin = coords(c, root, 0);
    for (int v = 0; v < coords.joints(); ++v) {
      for (int t = 0; t < coords.frames(); ++t) coords(c, v, t) -= origin;
    }
  }
}

Coords resample(const Coords& x, double begin, double length, int frames_out) {
  if (frames_out < 1) throw ShapeError("resample: frames_out must be >= 1");
  if (x.frames() < 1) throw ShapeError("resample: empty input");
  Coords out(x.channels(), x.joints(), frames_out);
  const int last = x.frames() - 1;
  const double step = frames_out > 1 ? (length - 1.0) / static_cast<double>(frames_out - 1) : 0.0;
  for (int i = 0; i < frames_out; ++i) {
    const double pos = std::clamp(begin + step * i, 0.0, static_cast<double>(last));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, last);
    const float w = static_cast<float>(pos - lo);
    for (int c = 0; c < x.channels(); ++c) {
      for (int v = 0; v < x.joints(); ++v) {
        const float a = x(c, v, lo);
        out(c, v, i) = w == 0.0f ? a : a + w * (x(c, v, hi) - a);
      }
    }
  }
  return out;
}

Coords resample_uniform(const Coords& x, int frames_out) {
  return resample(x, 0.0, static_cast<double>(x.frames()), frames_out);
}

int Dataset::max_frames() const {
  int t = 0;
  for (const auto& s : sequences) t = std::max(t, s.coords.frames());
  return t;
}

int Dataset::n_classes() const {
  int n = 0;
  for (const auto& s : sequences) {
    if (s.label) n = std::max(n, *s.label + 1);
  }
  return std::max(n, static_cast<int>(class_names.size()));
}

}  // namespace dcc
