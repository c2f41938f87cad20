#pragma once

// Training objectives over projected feature matrices (rows = samples).
// Every term has a closed-form gradient so the model graph only needs the
// projector outputs as seeds; the functions are templated on the scalar so
// the same code is checked in double against finite differences.

#include "dcc/errors.hpp"
#include "dcc/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dcc {

struct LossConfig {
  double alpha = 1.0;   ///< decomposition weight
  double beta = 1.0;    ///< composition weight
  double lambda = 5.0;  ///< variance-hinge weight inside each VC term
  double gamma = 1.0;   ///< target standard deviation
  double eps = 1e-4;    ///< added to the variance before the square root

  void validate() const {
    if (alpha < 0 || beta < 0 || lambda < 0 || gamma < 0) throw ConfigError("loss weights must be >= 0");
    if (!(eps > 0)) throw ConfigError("loss eps must be > 0");
  }
};

enum class StreamKind { temporal, spatial, global };

/// Projector outputs of one stream.
template <typename T>
struct StreamProjections {
  StreamKind kind = StreamKind::temporal;
  std::vector<MatrixT<T>> unimodal;    ///< z^k, one per modality
  std::vector<MatrixT<T>> decomposed;  ///< z~^k projected from the fused feature
  std::optional<MatrixT<T>> composed;  ///< projected mean of unimodal features
  std::optional<MatrixT<T>> fused;     ///< fused feature through the multimodal head
};

template <typename T>
struct ProjectedFeatures {
  std::vector<StreamProjections<T>> streams;

  /// Zero matrices with identical layout.
  ProjectedFeatures zeros_like() const {
    ProjectedFeatures out = *this;
    for (auto& s : out.streams) {
      for (auto& m : s.unimodal) m.setZero();
      for (auto& m : s.decomposed) m.setZero();
      if (s.composed) s.composed->setZero();
      if (s.fused) s.fused->setZero();
    }
    return out;
  }

  /// Every matrix that enters the regularizer, in a fixed order.
  template <typename F>
  void for_each_matrix(F&& f) {
    for (auto& s : streams) {
      for (auto& m : s.unimodal) f(m);
      for (auto& m : s.decomposed) f(m);
      if (s.composed) f(*s.composed);
      if (s.fused) f(*s.fused);
    }
  }
  template <typename F>
  void for_each_matrix(F&& f) const {
    for (const auto& s : streams) {
      for (const auto& m : s.unimodal) f(m);
      for (const auto& m : s.decomposed) f(m);
      if (s.composed) f(*s.composed);
      if (s.fused) f(*s.fused);
    }
  }
  std::size_t matrix_count() const {
    std::size_t n = 0;
    for_each_matrix([&](const MatrixT<T>&) { ++n; });
    return n;
  }
};

/// Every term of the total loss.
struct LossBreakdown {
  double d_temporal = 0.0;
  double d_spatial = 0.0;
  double d_global = 0.0;
  double decomposition = 0.0;
  double composition = 0.0;
  std::vector<double> variance;    ///< one per regularized matrix
  std::vector<double> covariance;  ///< one per regularized matrix
  double regularization = 0.0;
  double total = 0.0;

  /// Weighted sum of two breakdowns; used to symmetrize pair directions.
  static LossBreakdown blend(const LossBreakdown& a, const LossBreakdown& b, double wa, double wb);
};

inline LossBreakdown LossBreakdown::blend(const LossBreakdown& a, const LossBreakdown& b, double wa, double wb) {
  LossBreakdown out;
  out.d_temporal = wa * a.d_temporal + wb * b.d_temporal;
  out.d_spatial = wa * a.d_spatial + wb * b.d_spatial;
  out.d_global = wa * a.d_global + wb * b.d_global;
  out.decomposition = wa * a.decomposition + wb * b.decomposition;
  out.composition = wa * a.composition + wb * b.composition;
  out.regularization = wa * a.regularization + wb * b.regularization;
  out.total = wa * a.total + wb * b.total;
  out.variance = a.variance;
  out.variance.insert(out.variance.end(), b.variance.begin(), b.variance.end());
  out.covariance = a.covariance;
  out.covariance.insert(out.covariance.end(), b.covariance.begin(), b.covariance.end());
  return out;
}

namespace detail {

template <typename T>
void require_same_shape(const MatrixT<T>& a, const MatrixT<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape (" + std::to_string(a.rows()) + "," + std::to_string(a.cols()) +
                     ") vs (" + std::to_string(b.rows()) + "," + std::to_string(b.cols()) + ")");
  }
}

template <typename T>
void require_batch(const MatrixT<T>& z, const char* op) {
  if (z.rows() < 2) throw ShapeError(std::string(op) + ": variance undefined for N < 2");
}

}  // namespace detail

/// (1/N) sum_i ||a_i - b_i||^2. Gradients (if non-null) are accumulated
/// with weight `w`.
template <typename T>
T mse_align(const MatrixT<T>& a, const MatrixT<T>& b, MatrixT<T>* ga = nullptr, MatrixT<T>* gb = nullptr,
            T w = T(1)) {
  detail::require_same_shape(a, b, "mse_align");
  if (a.rows() < 1) throw ShapeError("mse_align: N must be >= 1");
  const T n = static_cast<T>(a.rows());
  const MatrixT<T> diff = a - b;
  if (ga) *ga += (T(2) * w / n) * diff;
  if (gb) *gb -= (T(2) * w / n) * diff;
  return diff.squaredNorm() / n;
}

/// (1/D) sum_j max(0, gamma - sqrt(var_j + eps)) with unbiased column variance.
template <typename T>
T variance_term(const MatrixT<T>& z, T gamma, T eps, MatrixT<T>* grad = nullptr, T w = T(1)) {
  detail::require_batch(z, "variance_term");
  const T n = static_cast<T>(z.rows());
  const T d = static_cast<T>(z.cols());
  const Eigen::Matrix<T, 1, Eigen::Dynamic> mean = z.colwise().mean();
  const MatrixT<T> centered = z.rowwise() - mean;
  T total = 0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const T var = centered.col(j).squaredNorm() / (n - T(1));
    const T sd = std::sqrt(var + eps);
    const T hinge = gamma - sd;
    if (hinge > T(0)) {
      total += hinge;
      // d(-sd)/dz_ij = -(z_ij - mean_j) / ((N-1) * sd)
      if (grad) grad->col(j) -= (w / d) * centered.col(j) / ((n - T(1)) * sd);
    }
  }
  return total / d;
}

/// (1/D) sum_{i != j} Cov(Z)_{ij}^2 with Cov = centered^T centered / (N-1).
template <typename T>
T covariance_term(const MatrixT<T>& z, MatrixT<T>* grad = nullptr, T w = T(1)) {
  detail::require_batch(z, "covariance_term");
  const T n = static_cast<T>(z.rows());
  const T d = static_cast<T>(z.cols());
  const MatrixT<T> centered = z.rowwise() - z.colwise().mean();
  MatrixT<T> cov = centered.transpose() * centered / (n - T(1));
  cov.diagonal().setZero();
  if (grad) *grad += (T(4) * w / (d * (n - T(1)))) * (centered * cov);
  return cov.squaredNorm() / d;
}

/// lambda * variance_term + covariance_term.
template <typename T>
T vc_loss(const MatrixT<T>& z, const LossConfig& cfg, MatrixT<T>* grad = nullptr, T w = T(1), T* var_out = nullptr,
          T* cov_out = nullptr) {
  const T lambda = static_cast<T>(cfg.lambda);
  const T v = variance_term<T>(z, static_cast<T>(cfg.gamma), static_cast<T>(cfg.eps), grad, w * lambda);
  const T c = covariance_term<T>(z, grad, w);
  if (var_out) *var_out = v;
  if (cov_out) *cov_out = c;
  return lambda * v + c;
}

namespace detail {

template <typename T>
T stream_decomposition(const StreamProjections<T>& s, StreamProjections<T>* g, T w) {
  if (s.unimodal.size() != s.decomposed.size() || s.unimodal.empty()) {
    throw ShapeError("decomposition_loss: every modality needs both z and z~");
  }
  T total = 0;
  for (std::size_t k = 0; k < s.unimodal.size(); ++k) {
    total += mse_align<T>(s.unimodal[k], s.decomposed[k], g ? &g->unimodal[k] : nullptr,
                          g ? &g->decomposed[k] : nullptr, w);
  }
  return total;
}

}  // namespace detail

/// Per-stream sums over modalities (not averaged over M).
struct DecompositionValues {
  double temporal = 0.0;
  double spatial = 0.0;
  double global = 0.0;
  double total = 0.0;
};

template <typename T>
DecompositionValues decomposition_loss(const ProjectedFeatures<T>& p, ProjectedFeatures<T>* grad = nullptr,
                                       T w = T(1)) {
  DecompositionValues out;
  for (std::size_t i = 0; i < p.streams.size(); ++i) {
    const T v = detail::stream_decomposition<T>(p.streams[i], grad ? &grad->streams[i] : nullptr, w);
    switch (p.streams[i].kind) {
      case StreamKind::temporal:
        out.temporal += static_cast<double>(v);
        break;
      case StreamKind::spatial:
        out.spatial += static_cast<double>(v);
        break;
      case StreamKind::global:
        out.global += static_cast<double>(v);
        break;
    }
    out.total += static_cast<double>(v);
  }
  return out;
}

/// (1/N) sum_i over streams ||z_i - z~_i||^2 for streams that carry a
/// composed target. Streams without one contribute nothing.
template <typename T>
T composition_loss(const ProjectedFeatures<T>& p, ProjectedFeatures<T>* grad = nullptr, T w = T(1)) {
  T total = 0;
  for (std::size_t i = 0; i < p.streams.size(); ++i) {
    const auto& s = p.streams[i];
    if (s.composed.has_value() != s.fused.has_value()) {
      throw ShapeError("composition_loss: composed and fused projections must come together");
    }
    if (!s.composed) continue;
    auto* gs = grad ? &grad->streams[i] : nullptr;
    total += mse_align<T>(*s.composed, *s.fused, gs ? &*gs->composed : nullptr, gs ? &*gs->fused : nullptr, w);
  }
  return total;
}

/// Sum of vc_loss over every projected matrix (4M + 4 for two streams with
/// composition). Fills per-matrix variance / covariance values when asked.
template <typename T>
T regularization_loss(const ProjectedFeatures<T>& p, const LossConfig& cfg, ProjectedFeatures<T>* grad = nullptr,
                      T w = T(1), std::vector<double>* variances = nullptr,
                      std::vector<double>* covariances = nullptr) {
  std::vector<const MatrixT<T>*> mats;
  p.for_each_matrix([&](const MatrixT<T>& m) { mats.push_back(&m); });
  std::vector<MatrixT<T>*> grads;
  if (grad) grad->for_each_matrix([&](MatrixT<T>& m) { grads.push_back(&m); });
  T total = 0;
  for (std::size_t i = 0; i < mats.size(); ++i) {
    T v = 0;
    T c = 0;
    total += vc_loss<T>(*mats[i], cfg, grad ? grads[i] : nullptr, w, &v, &c);
    if (variances) variances->push_back(static_cast<double>(v));
    if (covariances) covariances->push_back(static_cast<double>(c));
  }
  return total;
}

/// alpha * L_d + beta * L_c + L_reg. With `grad` set, d(total)/d(matrix) is
/// accumulated into it (layout must match `p`, e.g. from zeros_like()).
template <typename T>
LossBreakdown total_loss(const ProjectedFeatures<T>& p, const LossConfig& cfg, ProjectedFeatures<T>* grad = nullptr,
                         T w = T(1)) {
  cfg.validate();
  LossBreakdown out;
  const auto d = decomposition_loss<T>(p, grad, w * static_cast<T>(cfg.alpha));
  out.d_temporal = d.temporal;
  out.d_spatial = d.spatial;
  out.d_global = d.global;
  out.decomposition = d.total;
  out.composition = static_cast<double>(composition_loss<T>(p, grad, w * static_cast<T>(cfg.beta)));
  out.regularization =
      static_cast<double>(regularization_loss<T>(p, cfg, grad, w, &out.variance, &out.covariance));
  out.total = cfg.alpha * out.decomposition + cfg.beta * out.composition + out.regularization;
  return out;
}

}  // namespace dcc
