#pragma once

// Similarity measures M(z, t) between a visual embedding z and a textual
// embedding t. Every kind exposes forward evaluation and exact derivatives
// with respect to its parameters and both inputs.
//
// The routines are templated on the scalar so the same code runs on double
// and on Dual (forward-over-reverse Hessian-vector products).

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace metaalign {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

enum class MetricKind : std::uint8_t { kCosine = 0, kBilinear = 1, kMlp = 2 };

std::string_view MetricKindName(MetricKind kind);
MetricKind ParseMetricKind(std::string_view name);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameters packed into one flat vector so optimizers and the unroll tape
/// treat every kind uniformly.
///   cosine:   empty
///   bilinear: Theta (dim x dim), column-major
///   mlp:      W1 (hidden x 2 dim) col-major | b1 (hidden) | w2 (hidden) | b2
template <typename S>
struct BasicMetricParams {
  MetricKind kind = MetricKind::kCosine;
  Eigen::Index dim = 0;
  Eigen::Index hidden = 0;
  Vec<S> values;

  static Eigen::Index ParamCount(MetricKind kind, Eigen::Index dim, Eigen::Index hidden) {
    switch (kind) {
      case MetricKind::kCosine:
        return 0;
      case MetricKind::kBilinear:
        return dim * dim;
      case MetricKind::kMlp:
        return hidden * 2 * dim + hidden + hidden + 1;
    }
    return 0;
  }

  static BasicMetricParams Zeros(MetricKind kind, Eigen::Index dim, Eigen::Index hidden = 0) {
    if (dim <= 0) throw DimensionError("metric dimension must be positive");
    if (kind == MetricKind::kMlp && hidden < 1) throw DimensionError("mlp hidden width must be >= 1");
    BasicMetricParams p;
    p.kind = kind;
    p.dim = dim;
    p.hidden = kind == MetricKind::kMlp ? hidden : 0;
    p.values = Vec<S>::Zero(ParamCount(kind, dim, p.hidden));
    return p;
  }

  Eigen::Index size() const { return values.size(); }

  Eigen::Map<const Mat<S>> Theta() const { return {values.data(), dim, dim}; }
  Eigen::Map<Mat<S>> Theta() { return {values.data(), dim, dim}; }

  Eigen::Map<const Mat<S>> W1() const { return {values.data(), hidden, 2 * dim}; }
  Eigen::Map<Mat<S>> W1() { return {values.data(), hidden, 2 * dim}; }
  Eigen::Map<const Vec<S>> B1() const { return {values.data() + hidden * 2 * dim, hidden}; }
  Eigen::Map<Vec<S>> B1() { return {values.data() + hidden * 2 * dim, hidden}; }
  Eigen::Map<const Vec<S>> W2() const { return {values.data() + hidden * 2 * dim + hidden, hidden}; }
  Eigen::Map<Vec<S>> W2() { return {values.data() + hidden * 2 * dim + hidden, hidden}; }
  const S& B2() const { return values[values.size() - 1]; }
  S& B2() { return values[values.size() - 1]; }

  /// Same layout with a different scalar and the given values.
  template <typename T>
  BasicMetricParams<T> WithValues(Vec<T> v) const {
    BasicMetricParams<T> out;
    out.kind = kind;
    out.dim = dim;
    out.hidden = hidden;
    out.values = std::move(v);
    return out;
  }

  void CheckInvariants() const {
    if (dim <= 0) throw DimensionError("metric dimension must be positive");
    if (kind == MetricKind::kMlp && hidden < 1) throw DimensionError("mlp hidden width must be >= 1");
    if (values.size() != ParamCount(kind, dim, hidden)) {
      throw DimensionError(fmt::format("metric '{}' expects {} parameters, holds {}", MetricKindName(kind),
                                       ParamCount(kind, dim, hidden), values.size()));
    }
  }
};

using MetricParams = BasicMetricParams<double>;

enum class MetricInit {
  kNearIdentity,  // bilinear: I + 0.01 * N(0,1) / dim
  kGaussian,      // bilinear: N(0,1) / sqrt(dim)
};

/// Fresh parameters for `kind`. MLP weights are N(0, 1/fan_in) with zero
/// biases regardless of `init`.
MetricParams InitMetric(MetricKind kind, Eigen::Index dim, Eigen::Index hidden, MetricInit init,
                        std::mt19937_64& rng);

template <typename S>
struct SimilarityGradients {
  Vec<S> params;
  Vec<S> z;
  Vec<S> t;
};

template <typename S>
struct BatchSimilarityGradients {
  Vec<S> params;
  Mat<S> z;  // rows match the Z argument
  Mat<S> t;  // rows match the T argument
};

namespace detail {

template <typename S, typename A, typename B>
void CheckPair(const BasicMetricParams<S>& p, const A& z, const B& t) {
  if (z.size() != p.dim || t.size() != p.dim) {
    throw DimensionError(fmt::format("metric expects dim {} inputs, got z:{} t:{}", p.dim, z.size(), t.size()));
  }
}

template <typename S, typename T>
Vec<S> Concat(const T& z, const T& t) {
  Vec<S> x(z.size() + t.size());
  x << z, t;
  return x;
}

}  // namespace detail

/// M(z, t). Cosine and bilinear kinds expect unit-norm inputs (normalization
/// happens in the objective); the cosine kind still divides by the norms.
template <typename S>
S Similarity(const BasicMetricParams<S>& p, const Vec<S>& z, const Vec<S>& t) {
  detail::CheckPair(p, z, t);
  switch (p.kind) {
    case MetricKind::kCosine: {
      return z.dot(t) / (z.norm() * t.norm());
    }
    case MetricKind::kBilinear: {
      const Vec<S> theta_t = p.Theta() * t;
      return z.dot(theta_t);
    }
    case MetricKind::kMlp: {
      const Vec<S> x = detail::Concat<S>(z, t);
      const Vec<S> h = (p.W1() * x + p.B1()).array().tanh().matrix();
      return p.W2().dot(h) + p.B2();
    }
  }
  throw std::logic_error("unreachable metric kind");
}

/// Gradients of M(z, t) w.r.t. parameters, z and t.
template <typename S>
SimilarityGradients<S> SimilarityGrads(const BasicMetricParams<S>& p, const Vec<S>& z, const Vec<S>& t) {
  detail::CheckPair(p, z, t);
  SimilarityGradients<S> g;
  g.params = Vec<S>::Zero(p.size());
  switch (p.kind) {
    case MetricKind::kCosine: {
      const S nz = z.norm();
      const S nt = t.norm();
      const S s = z.dot(t) / (nz * nt);
      g.z = t / (nz * nt) - z * (s / (nz * nz));
      g.t = z / (nz * nt) - t * (s / (nt * nt));
      break;
    }
    case MetricKind::kBilinear: {
      Eigen::Map<Mat<S>>(g.params.data(), p.dim, p.dim) = z * t.transpose();
      g.z = p.Theta() * t;
      g.t = p.Theta().transpose() * z;
      break;
    }
    case MetricKind::kMlp: {
      const Vec<S> x = detail::Concat<S>(z, t);
      const Vec<S> h = (p.W1() * x + p.B1()).array().tanh().matrix();
      const Vec<S> delta = (p.W2().array() * (S(1) - h.array().square())).matrix();
      auto gp = p.WithValues(std::move(g.params));
      gp.W1() = delta * x.transpose();
      gp.B1() = delta;
      gp.W2() = h;
      gp.B2() = S(1);
      g.params = std::move(gp.values);
      const Vec<S> gx = p.W1().transpose() * delta;
      g.z = gx.head(p.dim);
      g.t = gx.tail(p.dim);
      break;
    }
  }
  return g;
}

/// Entry (i, c) = Similarity(p, Z.row(i), T.row(c)), bit-identical to the
/// scalar call.
template <typename S>
Mat<S> SimilarityMatrix(const BasicMetricParams<S>& p, const Mat<S>& Z, const Mat<S>& T) {
  if (Z.cols() != p.dim || T.cols() != p.dim) {
    throw DimensionError(fmt::format("metric expects dim {} rows, got Z:{} T:{}", p.dim, Z.cols(), T.cols()));
  }
  Mat<S> out(Z.rows(), T.rows());
  if (p.kind == MetricKind::kBilinear) {
    // Theta * t_c is shared across rows; same kernel as the scalar path.
    for (Eigen::Index c = 0; c < T.rows(); ++c) {
      const Vec<S> t = T.row(c).transpose();
      const Vec<S> theta_t = p.Theta() * t;
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const Vec<S> z = Z.row(i).transpose();
        out(i, c) = z.dot(theta_t);
      }
    }
    return out;
  }
  for (Eigen::Index c = 0; c < T.rows(); ++c) {
    const Vec<S> t = T.row(c).transpose();
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      const Vec<S> z = Z.row(i).transpose();
      out(i, c) = Similarity(p, z, t);
    }
  }
  return out;
}

/// Vector-Jacobian product of SimilarityMatrix with upstream adjoint G
/// (|Z| x |T|): returns sum_ic G_ic * dM(z_i, t_c)/d{params, z_i, t_c}.
template <typename S>
BatchSimilarityGradients<S> BackpropSimilarity(const BasicMetricParams<S>& p, const Mat<S>& Z, const Mat<S>& T,
                                               const Mat<S>& G) {
  if (G.rows() != Z.rows() || G.cols() != T.rows()) {
    throw DimensionError("adjoint shape must be |Z| x |T|");
  }
  BatchSimilarityGradients<S> out;
  out.params = Vec<S>::Zero(p.size());
  out.z = Mat<S>::Zero(Z.rows(), Z.cols());
  out.t = Mat<S>::Zero(T.rows(), T.cols());
  switch (p.kind) {
    case MetricKind::kBilinear: {
      // s_ic = z_i^T Theta t_c
      Eigen::Map<Mat<S>>(out.params.data(), p.dim, p.dim) = Z.transpose() * G * T;
      out.z = G * (T * p.Theta().transpose());
      out.t = G.transpose() * (Z * p.Theta());
      return out;
    }
    case MetricKind::kCosine:
    case MetricKind::kMlp: {
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        const Vec<S> z = Z.row(i).transpose();
        for (Eigen::Index c = 0; c < T.rows(); ++c) {
          const Vec<S> t = T.row(c).transpose();
          const auto g = SimilarityGrads(p, z, t);
          const S w = G(i, c);
          if (p.size() > 0) out.params += w * g.params;
          out.z.row(i) += w * g.z.transpose();
          out.t.row(c) += w * g.t.transpose();
        }
      }
      return out;
    }
  }
  throw std::logic_error("unreachable metric kind");
}

}  // namespace metaalign
