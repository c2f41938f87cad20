#include "dcc/training.hpp"

#include "dcc/checkpoint.hpp"
#include "dcc/config.hpp"
#include "dcc/errors.hpp"
#include "dcc/pairing.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace dcc {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (drop_epoch <= 0 || drop_epoch > max_epochs) throw ConfigError("drop_epoch must be in (0, max_epochs]");
  if (!(base_lr > 0) || !(drop_lr > 0)) throw ConfigError("learning rates must be > 0");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  loss.validate();
  augmentation.validate();
  model.validate();
  if (augmentation.frames_out != model.frames) {
    throw ConfigError("augmentation.frames_out (" + std::to_string(augmentation.frames_out) +
                      ") must equal model.frames (" + std::to_string(model.frames) + ")");
  }
}

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_epochs = 30;
  cfg.drop_epoch = 24;
  cfg.model = ModelConfig::desk();
  cfg.augmentation.frames_out = cfg.model.frames;
  cfg.loss.lambda = cfg.model.dim;
  return cfg;
}

TrainConfig TrainConfig::full_scale_ntu() {
  TrainConfig cfg;
  cfg.batch_size = 512;
  cfg.max_epochs = 450;
  cfg.drop_epoch = 350;
  cfg.model = ModelConfig::full_scale();
  cfg.augmentation.frames_out = cfg.model.frames;
  return cfg;
}

TrainConfig TrainConfig::full_scale_pku() {
  TrainConfig cfg = full_scale_ntu();
  cfg.max_epochs = 1000;
  cfg.drop_epoch = 800;
  return cfg;
}

double lr_schedule(int epoch, const TrainConfig& cfg) { return epoch < cfg.drop_epoch ? cfg.base_lr : cfg.drop_lr; }

Adam::Adam(const ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params.all()) {
    moments_.push_back({MatrixF::Zero(p.var.rows(), p.var.cols()), MatrixF::Zero(p.var.rows(), p.var.cols())});
  }
}

void Adam::step(ParameterStore& params, double lr, double weight_decay) {
  const auto& all = params.all();
  if (all.size() != moments_.size()) throw ShapeError("Adam: parameter count changed");
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float decay = static_cast<float>(1.0 - lr * weight_decay);
  const float e = static_cast<float>(eps_);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& node = *all[i].var.node();
    if (node.grad.size() == 0) continue;
    auto& [m, v] = moments_[i];
    m = b1 * m + (1.0f - b1) * node.grad;
    v = b2 * v + (1.0f - b2) * node.grad.cwiseAbs2();
    node.value *= decay;
    node.value.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + e);
  }
}

ProjectedVars cross_pair(const ProjectedVars& a, const ProjectedVars& b) {
  if (a.streams.size() != b.streams.size()) throw ShapeError("cross_pair: stream layouts differ");
  ProjectedVars out;
  for (std::size_t i = 0; i < a.streams.size(); ++i) {
    ProjectedVars::Stream s;
    s.kind = a.streams[i].kind;
    s.unimodal = b.streams[i].unimodal;
    s.decomposed = a.streams[i].decomposed;
    s.composed = b.streams[i].composed;
    s.fused = a.streams[i].fused;
    out.streams.push_back(std::move(s));
  }
  return out;
}

LossBreakdown pair_loss(const ProjectedVars& a, const ProjectedVars& b, const LossConfig& cfg,
                        std::vector<std::pair<ag::Var, MatrixF>>* seeds) {
  LossBreakdown parts[2];
  const ProjectedVars dirs[2] = {cross_pair(a, b), cross_pair(b, a)};
  for (int d = 0; d < 2; ++d) {
    const auto values = dirs[d].values();
    if (seeds) {
      auto grad = values.zeros_like();
      parts[d] = total_loss<float>(values, cfg, &grad, 0.5f);
      dirs[d].append_seeds(grad, *seeds);
    } else {
      parts[d] = total_loss<float>(values, cfg);
    }
  }
  return LossBreakdown::blend(parts[0], parts[1], 0.5, 0.5);
}

namespace {

struct Sample {
  ModalityBundle a;
  ModalityBundle b;
};

Rng sample_rng(std::uint64_t seed, int epoch, std::size_t batch, std::size_t slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch),
                    static_cast<std::uint32_t>(slot)};
  return Rng(seq);
}

std::vector<std::size_t> epoch_order(std::size_t n_groups, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n_groups);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0xFFFFFFFFu};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Every slot draws from its own generator, so the batch is identical for any
// worker count.
std::vector<Sample> build_batch(const Dataset& dataset, const PerformanceIndex& index,
                                std::span<const std::size_t> groups, const TrainConfig& cfg, int epoch,
                                std::size_t batch) {
  std::vector<Sample> out(groups.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = sample_rng(cfg.seed, epoch, batch, i);
      auto [x, y] = sample_positive_pair(dataset, index, groups[i], cfg.multiview, cfg.augmentation, rng);
      out[i] = {make_bundle(x.coords, dataset.topology), make_bundle(y.coords, dataset.topology)};
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), groups.size());
  if (n_workers <= 1) {
    work(0, groups.size());
    return out;
  }
  std::vector<std::jthread> threads;
  const std::size_t chunk = (groups.size() + n_workers - 1) / n_workers;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(groups.size(), begin + chunk);
    if (begin < end) threads.emplace_back(work, begin, end);
  }
  threads.clear();
  return out;
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.total) && std::isfinite(l.decomposition) && std::isfinite(l.composition) &&
         std::isfinite(l.regularization);
}

json loss_fields(double d_t, double d_s, double d_g, double d, double c, double reg, double total, double lr,
                 const LossConfig& cfg) {
  return {{"L_d_t", d_t}, {"L_d_s", d_s}, {"L_d_g", d_g}, {"L_d", d},          {"L_c", c},
          {"L_reg", reg}, {"total", total}, {"lr", lr},   {"alpha", cfg.alpha}, {"beta", cfg.beta}};
}

struct ResumeState {
  int epochs_completed = 0;
};

ResumeState restore(const std::filesystem::path& path, const TrainConfig& cfg, Model& model, Adam& optimizer) {
  const auto ckpt = read_checkpoint(path);
  const auto& h = ckpt.header;
  if (!h.contains("epochs_completed") || !h.contains("adam")) {
    throw FormatError("checkpoint " + path.string() + " carries no optimizer state; cannot resume");
  }
  const auto stored = model_config_from_json(h.at("model_config"));
  if (!(stored == cfg.model)) throw ConfigError("resume: checkpoint model_config differs from the run's model config");
  if (h.contains("seed") && h.at("seed").get<std::uint64_t>() != cfg.seed) {
    throw ConfigError("resume: checkpoint seed differs from the run's seed");
  }
  load_parameters(model, ckpt);
  const auto& params = model.parameters().all();
  auto& moments = optimizer.moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Blob* m = ckpt.find("adam.m." + params[i].name);
    const Blob* v = ckpt.find("adam.v." + params[i].name);
    if (!m || !v) throw FormatError("checkpoint is missing Adam moments for '" + params[i].name + "'");
    if (m->value.rows() != moments[i].m.rows() || m->value.cols() != moments[i].m.cols() ||
        v->value.rows() != moments[i].v.rows() || v->value.cols() != moments[i].v.cols()) {
      throw FormatError("Adam moments for '" + params[i].name + "' have the wrong shape");
    }
    moments[i].m = m->value;
    moments[i].v = v->value;
  }
  optimizer.set_steps(h.at("adam").at("steps").get<std::int64_t>());
  return {h.at("epochs_completed").get<int>()};
}

}  // namespace

void save_training_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer,
                              const TrainConfig& cfg, int epochs_completed) {
  auto ckpt = checkpoint_from_model(model);
  ckpt.header["train_config"] = to_json(cfg);
  ckpt.header["epochs_completed"] = epochs_completed;
  ckpt.header["seed"] = cfg.seed;
  ckpt.header["adam"] = {{"steps", optimizer.steps()},
                         {"beta1", optimizer.beta1()},
                         {"beta2", optimizer.beta2()},
                         {"eps", optimizer.eps()}};
  // Sampling streams are derived from (seed, epoch, batch, slot); the next
  // epoch index is the whole generator state.
  ckpt.header["rng"] = {{"seed", cfg.seed}, {"next_epoch", epochs_completed}};
  const auto& params = model.parameters().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.blobs.push_back({"adam.m." + params[i].name, optimizer.moments()[i].m});
    ckpt.blobs.push_back({"adam.v." + params[i].name, optimizer.moments()[i].v});
  }
  write_checkpoint(path, ckpt);
}

std::string metrics_line(const StepRecord& rec, const LossConfig& cfg) {
  const auto& l = rec.loss;
  json j = {{"epoch", rec.epoch}, {"step", rec.step}};
  j.update(loss_fields(l.d_temporal, l.d_spatial, l.d_global, l.decomposition, l.composition, l.regularization,
                       l.total, rec.lr, cfg));
  return j.dump();
}

std::string metrics_line(const EpochRecord& rec, const LossConfig& cfg) {
  json j = {{"epoch", rec.epoch}, {"step", nullptr}, {"batches", rec.batches}};
  j.update(loss_fields(rec.d_temporal, rec.d_spatial, rec.d_global, rec.decomposition, rec.composition,
                       rec.regularization, rec.total, rec.lr, cfg));
  return j.dump();
}

PretrainResult pretrain(const Dataset& dataset, const TrainConfig& cfg, const PretrainOptions& options) {
  cfg.validate();
  if (dataset.sequences.empty()) throw ConfigError("pretrain: dataset is empty");
  if (dataset.topology.n_joints() != cfg.model.joints) {
    throw ConfigError("pretrain: dataset has " + std::to_string(dataset.topology.n_joints()) +
                      " joints but model.joints is " + std::to_string(cfg.model.joints));
  }

  const PerformanceIndex index(dataset);
  if (index.size() < 2) throw ConfigError("pretrain: need at least 2 performances for a batch");
  // A dataset smaller than one batch trains on a single full-dataset batch.
  const std::size_t batch_size = std::min(index.size(), static_cast<std::size_t>(cfg.batch_size));
  const std::size_t n_batches = index.size() / batch_size;

  PretrainResult result{Model(cfg.model, cfg.seed), Adam(ParameterStore{}), 0, {}, {}};
  result.optimizer = Adam(result.model.parameters());
  int start_epoch = 0;
  if (options.resume_from) start_epoch = restore(*options.resume_from, cfg, result.model, result.optimizer).epochs_completed;
  result.epochs_completed = start_epoch;

  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    metrics.open(options.metrics_path, options.resume_from ? std::ios::app : std::ios::trunc);
    if (!metrics) throw FormatError("cannot open metrics file " + options.metrics_path.string());
  }

  auto& model = result.model;
  std::int64_t step = result.optimizer.steps();
  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    if (options.stop_after_epoch && epoch >= *options.stop_after_epoch) break;
    const double lr = lr_schedule(epoch, cfg);
    const auto order = epoch_order(index.size(), cfg.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::span<const std::size_t> groups(order.data() + b * batch_size, batch_size);
      const auto samples = build_batch(dataset, index, groups, cfg, epoch, b);
      std::vector<ModalityBundle> xa;
      std::vector<ModalityBundle> xb;
      xa.reserve(samples.size());
      xb.reserve(samples.size());
      for (const auto& s : samples) {
        xa.push_back(s.a);
        xb.push_back(s.b);
      }
      const auto fa = model.forward_batch(xa);
      const auto fb = model.forward_batch(xb);
      std::vector<std::pair<ag::Var, MatrixF>> seeds;
      const auto loss = pair_loss(fa.projections, fb.projections, cfg.loss, &seeds);
      if (!finite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << b << " (step " << step << "): total=" << loss.total
            << " L_d=" << loss.decomposition << " L_c=" << loss.composition << " L_reg=" << loss.regularization
            << "; performance groups:";
        for (auto g : groups) msg << ' ' << g;
        throw NumericalError(msg.str());
      }
      model.parameters().zero_grad();
      ag::backward(seeds);
      result.optimizer.step(model.parameters(), lr, cfg.weight_decay);
      ++step;

      StepRecord sr{epoch, step, lr, loss};
      if (cfg.log_steps && metrics) metrics << metrics_line(sr, cfg.loss) << '\n';
      rec.d_temporal += loss.d_temporal;
      rec.d_spatial += loss.d_spatial;
      rec.d_global += loss.d_global;
      rec.decomposition += loss.decomposition;
      rec.composition += loss.composition;
      rec.regularization += loss.regularization;
      rec.total += loss.total;
      ++rec.batches;
      sr.loss.variance.clear();
      sr.loss.covariance.clear();
      result.steps.push_back(std::move(sr));
    }
    const double n = static_cast<double>(std::max(rec.batches, 1));
    for (double* v : {&rec.d_temporal, &rec.d_spatial, &rec.d_global, &rec.decomposition, &rec.composition,
                      &rec.regularization, &rec.total}) {
      *v /= n;
    }
    if (metrics) metrics << metrics_line(rec, cfg.loss) << std::endl;
    result.epochs.push_back(rec);
    result.epochs_completed = epoch + 1;
    if (options.on_epoch) options.on_epoch(rec);
    const bool periodic = cfg.checkpoint_every > 0 && result.epochs_completed % cfg.checkpoint_every == 0;
    if (!options.checkpoint_path.empty() && periodic) {
      save_training_checkpoint(options.checkpoint_path, model, result.optimizer, cfg, result.epochs_completed);
    }
  }
  model.parameters().zero_grad();
  if (!options.checkpoint_path.empty()) {
    save_training_checkpoint(options.checkpoint_path, model, result.optimizer, cfg, result.epochs_completed);
  }
  return result;
}

}  // namespace dcc
