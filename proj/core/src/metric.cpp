#include "metaalign/metric.hpp"

#include <cmath>

namespace metaalign {

std::string_view MetricKindName(MetricKind kind) {
  switch (kind) {
    case MetricKind::kCosine:
      return "cosine";
    case MetricKind::kBilinear:
      return "bilinear";
    case MetricKind::kMlp:
      return "mlp";
  }
  return "unknown";
}

MetricKind ParseMetricKind(std::string_view name) {
  for (auto k : {MetricKind::kCosine, MetricKind::kBilinear, MetricKind::kMlp}) {
    if (MetricKindName(k) == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown metric kind '{}'", name));
}

MetricParams InitMetric(MetricKind kind, Eigen::Index dim, Eigen::Index hidden, MetricInit init,
                        std::mt19937_64& rng) {
  auto p = MetricParams::Zeros(kind, dim, hidden);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = static_cast<double>(dim);
  switch (kind) {
    case MetricKind::kCosine:
      break;
    case MetricKind::kBilinear: {
      auto theta = p.Theta();
      for (Eigen::Index j = 0; j < dim; ++j) {
        for (Eigen::Index i = 0; i < dim; ++i) {
          if (init == MetricInit::kNearIdentity) {
            theta(i, j) = (i == j ? 1.0 : 0.0) + 0.01 * normal(rng) / d;
          } else {
            theta(i, j) = normal(rng) / std::sqrt(d);
          }
        }
      }
      break;
    }
    case MetricKind::kMlp: {
      auto w1 = p.W1();
      for (Eigen::Index j = 0; j < w1.cols(); ++j) {
        for (Eigen::Index i = 0; i < w1.rows(); ++i) w1(i, j) = normal(rng) / std::sqrt(2.0 * d);
      }
      auto w2 = p.W2();
      for (Eigen::Index i = 0; i < hidden; ++i) w2[i] = normal(rng) / std::sqrt(static_cast<double>(hidden));
      break;
    }
  }
  return p;
}

}  // namespace metaalign
