#pragma once

#include "dcc/autograd.hpp"
#include "dcc/losses.hpp"
#include "dcc/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcc {

enum class FusionMode { average, linear };

/// spatial_temporal: per-stream projectors with both decomposition and composition terms.
/// global: the single-stream baseline; projectors act on concat(y_s, y_t)
/// and there is no composition target.
enum class DecompositionMode { spatial_temporal, global };

struct ModelConfig {
  int dim = 64;
  int n_layers = 1;
  int n_heads = 1;
  int ffn_mult = 4;
  int frames = 16;
  int joints = 11;
  int channels = 3;
  std::vector<Modality> modalities{Modality::joint, Modality::bone, Modality::motion};
  FusionMode fusion = FusionMode::average;
  int projector_hidden_mult = 1;
  DecompositionMode decomposition = DecompositionMode::spatial_temporal;

  void validate() const;
  int n_tokens(StreamKind s) const;
  int input_width(StreamKind s) const;
  bool has(Modality m) const;

  /// D = 64, 16 frames, 11 joints.
  static ModelConfig desk();
  /// D = 1024, 64 frames, 25 joints, one layer, one head.
  static ModelConfig full_scale();

  bool operator==(const ModelConfig& other) const = default;
};

struct NamedParameter {
  std::string name;
  ag::Var var;
};

/// Ordered registry of trainable leaves.
class ParameterStore {
 public:
  ag::Var add(std::string name, MatrixF init);
  const std::vector<NamedParameter>& all() const { return params_; }
  const ag::Var* find(const std::string& name) const;
  void zero_grad();
  /// Total scalar count over parameters whose name starts with `prefix`.
  std::size_t count(const std::string& prefix = "") const;

 private:
  std::vector<NamedParameter> params_;
};

/// Which projection head to use: a modality's own head or the multimodal one.
struct ProjectorHead {
  std::optional<Modality> modality;  ///< nullopt selects the multimodal head
  StreamKind stream = StreamKind::temporal;
};

/// Pooled encoder outputs for a batch, each (B, D).
struct RepresentationSet {
  std::vector<Modality> modalities;
  std::vector<ag::Var> temporal;  ///< y_t^k, indexed like `modalities`
  std::vector<ag::Var> spatial;   ///< y_s^k
  ag::Var fused_temporal;         ///< y~_t
  ag::Var fused_spatial;          ///< y~_s

  /// concat(y~_s, y~_t), width 2D.
  ag::Var unified() const;
  /// concat(y_s^k, y_t^k), width 2D.
  ag::Var global(Modality m) const;
};

/// Graph-side mirror of ProjectedFeatures.
struct ProjectedVars {
  struct Stream {
    StreamKind kind = StreamKind::temporal;
    std::vector<ag::Var> unimodal;
    std::vector<ag::Var> decomposed;
    std::optional<ag::Var> composed;
    std::optional<ag::Var> fused;
  };
  std::vector<Stream> streams;

  ProjectedFeatures<float> values() const;
  /// Pairs each node with its gradient from a loss evaluated on values().
  void append_seeds(const ProjectedFeatures<float>& grad, std::vector<std::pair<ag::Var, MatrixF>>& seeds) const;
};

struct ForwardResult {
  RepresentationSet representations;
  ProjectedVars projections;
};

/// Per-modality embeddings, embedding fusion, one shared pre-norm
/// transformer encoder per stream, and modality-specific projectors.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  // Parameters live behind shared nodes, so copies would alias them.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// Deep copy with independent parameter storage.
  Model clone() const;

  const ModelConfig& config() const { return cfg_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

  /// x is (B * n_tokens, input_width) for the stream; returns (B * n_tokens, D).
  ag::Var embed(const ag::Var& x, Modality m, StreamKind s) const;
  /// Fuses per-modality token arrays with the configured mode.
  ag::Var fuse(std::span<const ag::Var> hs, StreamKind s) const;
  /// Tokens (G * n_tokens, D) -> pooled (G, D) through the stream's encoder.
  ag::Var encode(const ag::Var& tokens, StreamKind s, int n_tokens) const;
  ag::Var encode(const ag::Var& tokens, StreamKind s) const { return encode(tokens, s, cfg_.n_tokens(s)); }
  ag::Var project(const ag::Var& y, const ProjectorHead& head) const;

  ForwardResult forward_batch(std::span<const ModalityBundle> batch) const;

  /// concat(y~_s, y~_t) where the fused embedding is the mean over `subset`
  /// (or the configured fusion when `subset` is every model modality).
  ag::Var unified(std::span<const ModalityBundle> batch, std::span<const Modality> subset) const;

  /// Stacks one view of every bundle: (B * n_tokens, input_width).
  ag::Var stack_view(std::span<const ModalityBundle> batch, Modality m, StreamKind s) const;

  std::size_t encoder_parameter_count() const { return params_.count("encoder."); }
  std::size_t embedding_parameter_count() const { return params_.count("embed."); }
  std::size_t projector_parameter_count() const { return params_.count("proj."); }
  std::size_t fusion_parameter_count() const { return params_.count("fuse."); }
  std::size_t positional_parameter_count() const { return params_.count("pos."); }

 private:
  struct Linear {
    ag::Var weight;
    ag::Var bias;
  };
  struct Norm {
    ag::Var gamma;
    ag::Var beta;
  };
  struct EncoderLayer {
    Norm norm1;
    Linear q, k, v, out;
    Norm norm2;
    Linear ffn1, ffn2;
  };
  struct Encoder {
    std::vector<EncoderLayer> layers;
    Norm final_norm;
  };
  struct TwoLayer {
    Linear fc1, fc2;
  };

  Linear make_linear(const std::string& name, int in, int out);
  Norm make_norm(const std::string& name, int width);
  TwoLayer make_two_layer(const std::string& name, int in, int hidden, int out);

  static ag::Var apply(const Linear& l, const ag::Var& x) { return ag::linear(x, l.weight, l.bias); }
  static ag::Var apply(const Norm& n, const ag::Var& x) { return ag::layer_norm(x, n.gamma, n.beta); }

  const TwoLayer& embedding(Modality m, StreamKind s) const;
  const TwoLayer& projector(const ProjectorHead& head) const;
  static std::size_t stream_slot(StreamKind s);
  static std::size_t head_slot(const std::optional<Modality>& m);

  ModelConfig cfg_;
  ParameterStore params_;
  std::uint64_t init_state_;
  std::array<std::array<std::optional<TwoLayer>, 3>, 2> embeddings_;
  std::array<ag::Var, 2> positional_;
  std::array<std::optional<Linear>, 2> fusion_;
  std::array<Encoder, 2> encoders_;
  // [temporal, spatial, global][joint, bone, motion, multimodal]
  std::array<std::array<std::optional<TwoLayer>, 4>, 3> projectors_;
};

}  // namespace dcc
