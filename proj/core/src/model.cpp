#include "dcc/model.hpp"

#include "dcc/augment.hpp"
#include "dcc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dcc {

namespace {

constexpr std::array<StreamKind, 2> kEncoderStreams{StreamKind::temporal, StreamKind::spatial};

const char* stream_tag(StreamKind s) {
  switch (s) {
    case StreamKind::temporal:
      return "t";
    case StreamKind::spatial:
      return "s";
    case StreamKind::global:
      return "g";
  }
  return "?";
}

}  // namespace

void ModelConfig::validate() const {
  if (dim < 1 || n_layers < 0 || n_heads < 1 || ffn_mult < 1 || projector_hidden_mult < 1) {
    throw ConfigError("model: dimensions must be positive");
  }
  if (dim % n_heads != 0) throw ConfigError("model: dim must be divisible by n_heads");
  if (frames < 1 || joints < 2 || channels < 1) throw ConfigError("model: frames/joints/channels out of range");
  if (modalities.empty()) throw ConfigError("model: modality list is empty");
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    for (std::size_t j = i + 1; j < modalities.size(); ++j) {
      if (modalities[i] == modalities[j]) throw ConfigError("model: duplicate modality");
    }
  }
}

int ModelConfig::n_tokens(StreamKind s) const { return s == StreamKind::temporal ? frames : joints; }

int ModelConfig::input_width(StreamKind s) const {
  return s == StreamKind::temporal ? joints * channels : frames * channels;
}

bool ModelConfig::has(Modality m) const { return std::find(modalities.begin(), modalities.end(), m) != modalities.end(); }

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.dim = 1024;
  cfg.frames = 64;
  cfg.joints = 25;
  return cfg;
}

ag::Var ParameterStore::add(std::string name, MatrixF init) {
  if (find(name)) throw ConfigError("duplicate parameter " + name);
  ag::Var v(std::move(init), true);
  params_.push_back({std::move(name), v});
  return v;
}

const ag::Var* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p.var;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParameterStore::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) n += static_cast<std::size_t>(p.var.value().size());
  }
  return n;
}

ag::Var RepresentationSet::unified() const {
  const ag::Var parts[] = {fused_spatial, fused_temporal};
  return ag::concat_cols(parts);
}

ag::Var RepresentationSet::global(Modality m) const {
  for (std::size_t k = 0; k < modalities.size(); ++k) {
    if (modalities[k] == m) {
      const ag::Var parts[] = {spatial[k], temporal[k]};
      return ag::concat_cols(parts);
    }
  }
  throw ConfigError("modality " + std::string(to_string(m)) + " not in representation set");
}

ProjectedFeatures<float> ProjectedVars::values() const {
  ProjectedFeatures<float> out;
  for (const auto& s : streams) {
    StreamProjections<float> p;
    p.kind = s.kind;
    for (const auto& v : s.unimodal) p.unimodal.push_back(v.value());
    for (const auto& v : s.decomposed) p.decomposed.push_back(v.value());
    if (s.composed) p.composed = s.composed->value();
    if (s.fused) p.fused = s.fused->value();
    out.streams.push_back(std::move(p));
  }
  return out;
}

void ProjectedVars::append_seeds(const ProjectedFeatures<float>& grad,
                                 std::vector<std::pair<ag::Var, MatrixF>>& seeds) const {
  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto& s = streams[i];
    const auto& g = grad.streams.at(i);
    for (std::size_t k = 0; k < s.unimodal.size(); ++k) seeds.emplace_back(s.unimodal[k], g.unimodal[k]);
    for (std::size_t k = 0; k < s.decomposed.size(); ++k) seeds.emplace_back(s.decomposed[k], g.decomposed[k]);
    if (s.composed) seeds.emplace_back(*s.composed, *g.composed);
    if (s.fused) seeds.emplace_back(*s.fused, *g.fused);
  }
}

Model::Linear Model::make_linear(const std::string& name, int in, int out) {
  // Xavier-uniform weights, zero bias; drawn from a counter-based stream so
  // parameter creation order alone fixes the values.
  Rng rng(init_state_++);
  const float bound = std::sqrt(6.0f / static_cast<float>(in + out));
  std::uniform_real_distribution<float> u(-bound, bound);
  MatrixF w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return {params_.add(name + ".weight", std::move(w)), params_.add(name + ".bias", MatrixF::Zero(1, out))};
}

Model::Norm Model::make_norm(const std::string& name, int width) {
  return {params_.add(name + ".gamma", MatrixF::Ones(1, width)), params_.add(name + ".beta", MatrixF::Zero(1, width))};
}

Model::TwoLayer Model::make_two_layer(const std::string& name, int in, int hidden, int out) {
  return {make_linear(name + ".fc1", in, hidden), make_linear(name + ".fc2", hidden, out)};
}

std::size_t Model::stream_slot(StreamKind s) { return static_cast<std::size_t>(s); }

std::size_t Model::head_slot(const std::optional<Modality>& m) { return m ? static_cast<std::size_t>(*m) : 3; }

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), init_state_(seed * 0x9E3779B97F4A7C15ULL) {
  cfg_.validate();
  const int D = cfg_.dim;

  for (auto s : kEncoderStreams) {
    for (auto m : cfg_.modalities) {
      embeddings_[stream_slot(s)][static_cast<std::size_t>(m)] =
          make_two_layer(std::string("embed.") + stream_tag(s) + "." + std::string(to_string(m)),
                         cfg_.input_width(s), D, D);
    }
    Rng rng(init_state_++);
    std::normal_distribution<float> n(0.0f, 0.02f);
    MatrixF table(cfg_.n_tokens(s), D);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = n(rng);
    positional_[stream_slot(s)] = params_.add(std::string("pos.") + stream_tag(s), std::move(table));
    if (cfg_.fusion == FusionMode::linear) {
      fusion_[stream_slot(s)] = make_linear(std::string("fuse.") + stream_tag(s),
                                            D * static_cast<int>(cfg_.modalities.size()), D);
    }
  }

  for (auto s : kEncoderStreams) {
    auto& enc = encoders_[stream_slot(s)];
    const std::string base = std::string("encoder.") + stream_tag(s);
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = base + ".layer" + std::to_string(l);
      EncoderLayer layer;
      layer.norm1 = make_norm(p + ".norm1", D);
      layer.q = make_linear(p + ".attn.q", D, D);
      layer.k = make_linear(p + ".attn.k", D, D);
      layer.v = make_linear(p + ".attn.v", D, D);
      layer.out = make_linear(p + ".attn.out", D, D);
      layer.norm2 = make_norm(p + ".norm2", D);
      layer.ffn1 = make_linear(p + ".ffn.fc1", D, D * cfg_.ffn_mult);
      layer.ffn2 = make_linear(p + ".ffn.fc2", D * cfg_.ffn_mult, D);
      enc.layers.push_back(std::move(layer));
    }
    enc.final_norm = make_norm(base + ".norm", D);
  }

  const int hidden = D * cfg_.projector_hidden_mult;
  if (cfg_.decomposition == DecompositionMode::spatial_temporal) {
    for (auto s : kEncoderStreams) {
      for (auto m : cfg_.modalities) {
        projectors_[stream_slot(s)][head_slot(m)] = make_two_layer(
            std::string("proj.") + stream_tag(s) + "." + std::string(to_string(m)), D, hidden, D);
      }
      projectors_[stream_slot(s)][head_slot(std::nullopt)] =
          make_two_layer(std::string("proj.") + stream_tag(s) + ".multi", D, hidden, D);
    }
  } else {
    for (auto m : cfg_.modalities) {
      projectors_[stream_slot(StreamKind::global)][head_slot(m)] =
          make_two_layer("proj.g." + std::string(to_string(m)), 2 * D, 2 * hidden, 2 * D);
    }
  }
}

Model Model::clone() const {
  Model out(cfg_, 0);
  const auto& src = params_.all();
  const auto& dst = out.params_.all();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto node = dst[i].var.node();
    node->value = src[i].var.value();
  }
  return out;
}

const Model::TwoLayer& Model::embedding(Modality m, StreamKind s) const {
  if (s == StreamKind::global) throw ConfigError("embed: no global stream embedding");
  const auto& e = embeddings_[stream_slot(s)][static_cast<std::size_t>(m)];
  if (!e) throw ConfigError("embed: model has no " + std::string(to_string(m)) + " modality");
  return *e;
}

const Model::TwoLayer& Model::projector(const ProjectorHead& head) const {
  const auto& p = projectors_[stream_slot(head.stream)][head_slot(head.modality)];
  if (!p) throw ConfigError("project: unknown head");
  return *p;
}

ag::Var Model::embed(const ag::Var& x, Modality m, StreamKind s) const {
  const auto& e = embedding(m, s);
  const int n = cfg_.n_tokens(s);
  if (x.cols() != cfg_.input_width(s) || x.rows() % n != 0 || x.rows() == 0) {
    throw ShapeError("embed: expected (B*" + std::to_string(n) + ", " + std::to_string(cfg_.input_width(s)) +
                     "), got (" + std::to_string(x.rows()) + ", " + std::to_string(x.cols()) + ")");
  }
  const auto h = apply(e.fc2, ag::gelu(apply(e.fc1, x)));
  return ag::add_tiled(h, positional_[stream_slot(s)]);
}

ag::Var Model::fuse(std::span<const ag::Var> hs, StreamKind s) const {
  if (hs.empty()) throw ShapeError("fuse: empty list");
  if (cfg_.fusion == FusionMode::average) return ag::mean_of(hs);
  if (hs.size() != cfg_.modalities.size()) throw ShapeError("fuse: linear mode needs every model modality");
  const auto& f = *fusion_[stream_slot(s)];
  return apply(f, ag::concat_cols(hs));
}

ag::Var Model::encode(const ag::Var& tokens, StreamKind s, int n_tokens) const {
  if (tokens.cols() != cfg_.dim) throw ShapeError("encode: token width must equal D");
  if (!tokens.value().allFinite()) throw NumericalError("encode: non-finite input tokens");
  const auto& enc = encoders_.at(stream_slot(s));
  ag::Var x = tokens;
  for (const auto& layer : enc.layers) {
    const auto a = apply(layer.norm1, x);
    const auto att = ag::attention(apply(layer.q, a), apply(layer.k, a), apply(layer.v, a), n_tokens, cfg_.n_heads);
    x = ag::add(x, apply(layer.out, att));
    const auto b = apply(layer.norm2, x);
    x = ag::add(x, apply(layer.ffn2, ag::gelu(apply(layer.ffn1, b))));
  }
  return ag::mean_pool(apply(enc.final_norm, x), n_tokens);
}

ag::Var Model::project(const ag::Var& y, const ProjectorHead& head) const {
  const auto& p = projector(head);
  return apply(p.fc2, ag::relu(apply(p.fc1, y)));
}

ag::Var Model::stack_view(std::span<const ModalityBundle> batch, Modality m, StreamKind s) const {
  const int n = cfg_.n_tokens(s);
  const int w = cfg_.input_width(s);
  MatrixF x(static_cast<Eigen::Index>(batch.size()) * n, w);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& views = batch[b][m];
    const MatrixF& v = s == StreamKind::temporal ? views.temporal : views.spatial;
    if (v.rows() != n || v.cols() != w) {
      throw ShapeError("stack_view: sample " + std::to_string(b) + " has view (" + std::to_string(v.rows()) + "," +
                       std::to_string(v.cols()) + "), model expects (" + std::to_string(n) + "," +
                       std::to_string(w) + ")");
    }
    x.middleRows(static_cast<Eigen::Index>(b) * n, n) = v;
  }
  return ag::Var(std::move(x), false);
}

ForwardResult Model::forward_batch(std::span<const ModalityBundle> batch) const {
  if (batch.empty()) throw ShapeError("forward_batch: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto M = static_cast<Eigen::Index>(cfg_.modalities.size());

  ForwardResult result;
  auto& rep = result.representations;
  rep.modalities = cfg_.modalities;

  for (auto s : kEncoderStreams) {
    std::vector<ag::Var> tokens;
    for (auto m : cfg_.modalities) tokens.push_back(embed(stack_view(batch, m, s), m, s));
    tokens.push_back(fuse(std::span<const ag::Var>(tokens.data(), tokens.size()), s));
    // One encoder pass over [h^1; ...; h^M; h~].
    const auto pooled = encode(ag::concat_rows(tokens), s);
    auto& unimodal = s == StreamKind::temporal ? rep.temporal : rep.spatial;
    for (Eigen::Index k = 0; k < M; ++k) unimodal.push_back(ag::slice_rows(pooled, k * B, B));
    (s == StreamKind::temporal ? rep.fused_temporal : rep.fused_spatial) = ag::slice_rows(pooled, M * B, B);
  }

  auto project_pair = [&](const ag::Var& y, const ag::Var& fused, const ProjectorHead& head) {
    const ag::Var both[] = {y, fused};
    const auto z = project(ag::concat_rows(both), head);
    return std::pair{ag::slice_rows(z, 0, B), ag::slice_rows(z, B, B)};
  };

  auto& proj = result.projections;
  if (cfg_.decomposition == DecompositionMode::spatial_temporal) {
    for (auto s : kEncoderStreams) {
      ProjectedVars::Stream st;
      st.kind = s;
      const auto& ys = s == StreamKind::temporal ? rep.temporal : rep.spatial;
      const auto& fused = s == StreamKind::temporal ? rep.fused_temporal : rep.fused_spatial;
      for (std::size_t k = 0; k < ys.size(); ++k) {
        auto [z, zt] = project_pair(ys[k], fused, {cfg_.modalities[k], s});
        st.unimodal.push_back(z);
        st.decomposed.push_back(zt);
      }
      auto [zc, zf] = project_pair(ag::mean_of(ys), fused, {std::nullopt, s});
      st.composed = zc;
      st.fused = zf;
      proj.streams.push_back(std::move(st));
    }
  } else {
    ProjectedVars::Stream st;
    st.kind = StreamKind::global;
    const auto fused = rep.unified();
    for (auto m : cfg_.modalities) {
      auto [z, zt] = project_pair(rep.global(m), fused, {m, StreamKind::global});
      st.unimodal.push_back(z);
      st.decomposed.push_back(zt);
    }
    proj.streams.push_back(std::move(st));
  }
  return result;
}

ag::Var Model::unified(std::span<const ModalityBundle> batch, std::span<const Modality> subset) const {
  if (subset.empty()) throw ConfigError("unified: empty modality subset");
  if (batch.empty()) throw ShapeError("unified: empty batch");
  for (auto m : subset) {
    if (!cfg_.has(m)) throw ConfigError("unified: model was built without " + std::string(to_string(m)));
  }
  const bool all = subset.size() == cfg_.modalities.size();
  std::array<ag::Var, 2> pooled;
  for (auto s : kEncoderStreams) {
    std::vector<ag::Var> tokens;
    // Keep the model's modality order so the fused path matches training.
    for (auto m : cfg_.modalities) {
      if (std::find(subset.begin(), subset.end(), m) != subset.end()) {
        tokens.push_back(embed(stack_view(batch, m, s), m, s));
      }
    }
    const auto fused = all ? fuse(tokens, s) : ag::mean_of(tokens);
    pooled[stream_slot(s)] = encode(fused, s);
  }
  const ag::Var parts[] = {pooled[stream_slot(StreamKind::spatial)], pooled[stream_slot(StreamKind::temporal)]};
  return ag::concat_cols(parts);
}

}  // namespace dcc
