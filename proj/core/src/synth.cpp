#include "dcc/synth.hpp"

#include "dcc/augment.hpp"
#include "dcc/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dcc {

namespace {

struct JointProgram {
  Eigen::Vector3d axis;
  double amplitude;
  double frequency;  // cycles per clip
  double phase;
};

Eigen::Vector3d random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

std::vector<Eigen::Vector3d> rest_offsets(const SkeletonTopology& topology) {
  const int V = topology.n_joints();
  std::vector<Eigen::Vector3d> offsets(static_cast<std::size_t>(V), Eigen::Vector3d::Zero());
  if (V == 11 && topology == SkeletonTopology::body11()) {
    offsets = {{0, 0, 0},        {0, 0.5, 0},      {0, 0.25, 0},    {0.3, -0.05, 0},
               {0.28, -0.02, 0}, {-0.3, -0.05, 0}, {-0.28, -0.02, 0}, {0.12, -0.45, 0},
               {0, -0.45, 0.05}, {-0.12, -0.45, 0}, {0, -0.45, 0.05}};
    return offsets;
  }
  Rng rng(0x5eed0ffULL);
  std::uniform_real_distribution<double> len(0.2, 0.4);
  for (int v = 0; v < V; ++v) {
    if (topology.parent[static_cast<std::size_t>(v)] != v) offsets[static_cast<std::size_t>(v)] = random_unit(rng) * len(rng);
  }
  return offsets;
}

std::vector<JointProgram> class_program(std::uint64_t class_seed, int label, int V) {
  std::seed_seq seq{static_cast<std::uint32_t>(class_seed), static_cast<std::uint32_t>(class_seed >> 32),
                    static_cast<std::uint32_t>(label), 0xc1a55u};
  Rng rng(seq);
  std::uniform_real_distribution<double> amp(0.3, 1.0);
  std::uniform_real_distribution<double> freq(0.5, 2.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::bernoulli_distribution active(0.7);
  std::vector<JointProgram> program(static_cast<std::size_t>(V));
  for (auto& j : program) {
    j.axis = random_unit(rng);
    j.amplitude = active(rng) ? amp(rng) : 0.05;
    j.frequency = freq(rng);
    j.phase = phase(rng);
  }
  return program;
}

double subject_scale(std::uint64_t seed, int subject) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(subject), 0x5b1ecu};
  Rng rng(seq);
  return std::uniform_real_distribution<double>(0.9, 1.1)(rng);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("synth: n_classes must be >= 2");
  if (n_views < 1) throw ConfigError("synth: n_views must be >= 1");
  if (n_performances < 1) throw ConfigError("synth: n_performances must be >= 1");
  if (n_joints < 2) throw ConfigError("synth: n_joints must be >= 2");
  if (n_frames < 1) throw ConfigError("synth: n_frames must be >= 1");
  if (n_subjects < 1) throw ConfigError("synth: n_subjects must be >= 1");
  if (!(noise_sd >= 0.0)) throw ConfigError("synth: noise_sd must be >= 0");
  if (!(style_amplitude >= 0.0)) throw ConfigError("synth: style_amplitude must be >= 0");
  if (!(facing_range >= 0.0)) throw ConfigError("synth: facing_range must be >= 0");
}

SkeletonTopology synth_topology(int n_joints) {
  return n_joints == 11 ? SkeletonTopology::body11() : SkeletonTopology::binary_tree(n_joints);
}

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.topology = synth_topology(cfg.n_joints);
  for (int c = 0; c < cfg.n_classes; ++c) {
    ds.class_names.push_back("class_" + std::string(c < 10 ? "0" : "") + std::to_string(c));
  }

  const int V = cfg.n_joints;
  const int T = cfg.n_frames;
  const auto offsets = rest_offsets(ds.topology);
  const auto order = ds.topology.topological_order();
  std::vector<std::vector<JointProgram>> programs;
  for (int c = 0; c < cfg.n_classes; ++c) programs.push_back(class_program(cfg.class_seed, c, V));

  std::vector<Eigen::Matrix3d> yaw(static_cast<std::size_t>(cfg.n_views));
  for (int i = 0; i < cfg.n_views; ++i) {
    const double angle =
        cfg.n_views == 1 ? 0.0 : -std::numbers::pi / 4 + i * (std::numbers::pi / 2) / (cfg.n_views - 1);
    yaw[static_cast<std::size_t>(i)] = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()).toRotationMatrix().transpose();
  }

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> amp_jitter(0.7, 1.3);
  std::uniform_real_distribution<double> tempo(0.8, 1.2);
  std::uniform_real_distribution<double> offset(0.0, 0.5);
  std::uniform_real_distribution<double> style_amp(0.0, 1.0);
  std::uniform_real_distribution<double> style_freq(0.5, 2.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Eigen::Vector3d> pos(static_cast<std::size_t>(V));
  std::vector<Eigen::Matrix3d> rot(static_cast<std::size_t>(V));

  for (int p = 0; p < cfg.n_performances; ++p) {
    const int label = p % cfg.n_classes;
    const int subject = (p / cfg.n_classes) % cfg.n_subjects;
    const double scale = subject_scale(cfg.seed, subject);
    const double gain = amp_jitter(rng);
    const double speed = tempo(rng);
    const double shift = offset(rng);
    const auto& program = programs[static_cast<std::size_t>(label)];
    std::vector<JointProgram> style(static_cast<std::size_t>(V));
    for (auto& j : style) {
      j.axis = random_unit(rng);
      j.amplitude = cfg.style_amplitude * style_amp(rng);
      j.frequency = style_freq(rng);
      j.phase = 2.0 * std::numbers::pi * unit(rng);
    }
    const double facing = cfg.facing_range * (2.0 * unit(rng) - 1.0);
    const Eigen::Matrix3d body_yaw = Eigen::AngleAxisd(facing, Eigen::Vector3d::UnitY()).toRotationMatrix();

    Coords world(3, V, T);
    for (int t = 0; t < T; ++t) {
      const double u = (T > 1 ? static_cast<double>(t) / (T - 1) : 0.0) * speed + shift;
      for (int v : order) {
        const auto vi = static_cast<std::size_t>(v);
        const int parent = ds.topology.parent[vi];
        const auto& jp = program[vi];
        const auto& js = style[vi];
        const double theta = gain * jp.amplitude * std::sin(2.0 * std::numbers::pi * jp.frequency * u + jp.phase);
        const double wobble = js.amplitude * std::sin(2.0 * std::numbers::pi * js.frequency * u + js.phase);
        const Eigen::Matrix3d local =
            Eigen::AngleAxisd(theta, jp.axis).toRotationMatrix() * Eigen::AngleAxisd(wobble, js.axis).toRotationMatrix();
        if (parent == v) {
          rot[vi] = body_yaw * local;
          pos[vi].setZero();
        } else {
          const auto pi = static_cast<std::size_t>(parent);
          rot[vi] = rot[pi] * local;
          pos[vi] = pos[pi] + rot[vi] * (offsets[vi] * scale);
        }
        for (int c = 0; c < 3; ++c) world(c, v, t) = static_cast<float>(pos[vi][c]);
      }
    }

    for (int view = 0; view < cfg.n_views; ++view) {
      SkeletonSequence seq;
      seq.coords = Coords(3, V, T);
      const auto& r = yaw[static_cast<std::size_t>(view)];
      for (int v = 0; v < V; ++v) {
        for (int t = 0; t < T; ++t) {
          const Eigen::Vector3d q = r * Eigen::Vector3d(world(0, v, t), world(1, v, t), world(2, v, t));
          for (int c = 0; c < 3; ++c) {
            double value = q[c];
            if (cfg.noise_sd > 0.0) value += cfg.noise_sd * noise(rng);
            seq.coords(c, v, t) = static_cast<float>(value);
          }
        }
      }
      seq.label = label;
      seq.subject_id = subject;
      seq.performance_id = p;
      seq.camera_id = view;
      ds.sequences.push_back(std::move(seq));
    }
  }
  return ds;
}

Dataset split_off_performances(Dataset& dataset, int n_train_performances) {
  Dataset rest;
  rest.topology = dataset.topology;
  rest.class_names = dataset.class_names;
  std::vector<SkeletonSequence> keep;
  for (auto& s : dataset.sequences) {
    if (s.performance_id >= n_train_performances) {
      rest.sequences.push_back(std::move(s));
    } else {
      keep.push_back(std::move(s));
    }
  }
  dataset.sequences = std::move(keep);
  return rest;
}

}  // namespace dcc
