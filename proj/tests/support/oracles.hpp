#pragma once

// Test-only reference computations. Nothing here calls an analytic gradient
// routine from the library; they only evaluate forward values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "metaalign/embedding_store.hpp"
#include "metaalign/episodic_sampler.hpp"
#include "metaalign/maml.hpp"

namespace metaalign::testing {

/// Central differences of f at x with step h, one coordinate at a time.
inline Eigen::VectorXd CentralDifference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Fourth-order central stencil
///   (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h.
/// Truncation is O(h^4), so a larger h keeps roundoff near 1e-13.
inline Eigen::VectorXd FivePointDifference(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  auto at = [&](Eigen::Index i, double offset) {
    probe[i] = x[i] + offset;
    const double v = f(probe);
    probe[i] = x[i];
    return v;
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = (-at(i, 2 * h) + 8 * at(i, h) - 8 * at(i, -h) + at(i, -2 * h)) / (12.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// derivative is ~0 from reporting noise-dominated ratios.
inline double RelativeError(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double MaxRelativeError(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, RelativeError(a[i], b[i], floor));
  return worst;
}

/// sum_{a,b} z_a Theta_ab t_b by explicit loops.
inline double BilinearTripleLoop(const Eigen::VectorXd& z, const Eigen::MatrixXd& theta, const Eigen::VectorXd& t) {
  double s = 0.0;
  for (Eigen::Index a = 0; a < z.size(); ++a) {
    for (Eigen::Index b = 0; b < t.size(); ++b) s += z[a] * theta(a, b) * t[b];
  }
  return s;
}

inline Eigen::VectorXd RandomVector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Eigen::MatrixXd RandomMatrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
  }
  return m;
}

/// A random episode with `n_way` classes of dim-d Gaussian features; not
/// drawn through the sampler so gradient tests do not depend on it.
inline Episode RandomEpisode(Eigen::Index d, std::size_t n_way, std::size_t k_shot, std::size_t m_query,
                             std::mt19937_64& rng) {
  Episode ep;
  for (std::size_t c = 0; c < n_way; ++c) {
    ep.class_names.push_back("c" + std::to_string(c));
    ep.textual_embeddings.push_back(RandomVector(d, rng));
    const Eigen::VectorXd center = RandomVector(d, rng);
    for (std::size_t k = 0; k < k_shot; ++k) {
      ep.support.push_back(center + RandomVector(d, rng, 0.5));
      ep.support_labels.push_back(static_cast<int>(c));
    }
    for (std::size_t m = 0; m < m_query; ++m) {
      ep.query.push_back(center + RandomVector(d, rng, 0.5));
      ep.query_labels.push_back(static_cast<int>(c));
    }
  }
  return ep;
}

/// Random model with heads near identity, for d_v = d_t = d.
inline ModelParams RandomModel(Eigen::Index d, MetricKind kind, std::mt19937_64& rng, Eigen::Index hidden = 4) {
  ModelParams p;
  p.heads.visual = Eigen::MatrixXd::Identity(d, d) + RandomMatrix(d, d, rng, 0.3);
  p.heads.text = Eigen::MatrixXd::Identity(d, d) + RandomMatrix(d, d, rng, 0.3);
  p.metric = MetricParams::Zeros(kind, d, hidden);
  if (kind == MetricKind::kBilinear) {
    p.metric.Theta() = Eigen::MatrixXd::Identity(d, d) + RandomMatrix(d, d, rng, 0.3);
  } else if (kind == MetricKind::kMlp) {
    p.metric.values = RandomVector(p.metric.size(), rng, 0.5);
  }
  return p;
}

/// Flattened [W_I | W_T | metric] gradient as a single vector.
inline Eigen::VectorXd FlatGradient(const LossGradients& g) {
  Eigen::VectorXd flat(g.visual.size() + g.text.size() + g.metric.size());
  flat << g.visual.reshaped(), g.text.reshaped(), g.metric;
  return flat;
}

/// Sample standard deviation (n - 1 denominator), two-pass.
inline double SampleStd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace metaalign::testing
