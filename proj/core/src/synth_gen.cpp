#include "metaalign/synth_gen.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace metaalign {

std::string_view DistortionName(Distortion d) {
  switch (d) {
    case Distortion::kNone:
      return "none";
    case Distortion::kOrthogonalRotation:
      return "orthogonal_rotation";
    case Distortion::kRotationPlusScaling:
      return "rotation_plus_scaling";
    case Distortion::kRandomLinear:
      return "random_linear";
  }
  return "unknown";
}

Distortion ParseDistortion(std::string_view name) {
  for (auto d : {Distortion::kNone, Distortion::kOrthogonalRotation, Distortion::kRotationPlusScaling,
                 Distortion::kRandomLinear}) {
    if (DistortionName(d) == name) return d;
  }
  throw std::invalid_argument(fmt::format("unknown distortion '{}'", name));
}

void CheckSynthConfig(const SynthConfig& config) {
  if (config.visual_dim == 0 || config.text_dim == 0) {
    throw std::invalid_argument("synth: d_v and d_t must be positive");
  }
  if (config.samples_per_class == 0) {
    throw std::invalid_argument("synth: samples_per_class must be positive");
  }
  if (!(config.cluster_spread >= 0.0) || !std::isfinite(config.cluster_spread)) {
    throw std::invalid_argument("synth: cluster_spread must be finite and non-negative");
  }
  if (!(config.class_separation > 0.0) || !std::isfinite(config.class_separation)) {
    throw std::invalid_argument("synth: class_separation must be finite and positive");
  }
  if (config.distortion != Distortion::kRandomLinear && config.text_dim != config.visual_dim) {
    throw std::invalid_argument(fmt::format("synth: distortion '{}' requires d_t == d_v (got d_v={}, d_t={})",
                                            DistortionName(config.distortion), config.visual_dim,
                                            config.text_dim));
  }
}

namespace {

using Rng = std::mt19937_64;

// Independent sub-streams of one seed: 0 = distortion, 1 = class data.
Rng StreamFor(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

Eigen::MatrixXd Gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

Eigen::VectorXd RoundToF32(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

}  // namespace

Eigen::MatrixXd RandomOrthogonal(std::size_t dim, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(dim);
  const Eigen::MatrixXd g = Gaussian(n, n, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

Eigen::MatrixXd DistortionMatrix(const SynthConfig& config) {
  CheckSynthConfig(config);
  const auto dv = static_cast<Eigen::Index>(config.visual_dim);
  const auto dt = static_cast<Eigen::Index>(config.text_dim);
  Rng rng = StreamFor(config.seed, 0);
  switch (config.distortion) {
    case Distortion::kNone:
      return Eigen::MatrixXd::Identity(dt, dv);
    case Distortion::kOrthogonalRotation:
      return RandomOrthogonal(config.visual_dim, rng);
    case Distortion::kRotationPlusScaling: {
      Eigen::MatrixXd q = RandomOrthogonal(config.visual_dim, rng);
      // per-axis log-uniform scales in [1/2, 2]
      std::uniform_real_distribution<double> log_scale(-std::log(2.0), std::log(2.0));
      for (Eigen::Index i = 0; i < dt; ++i) q.row(i) *= std::exp(log_scale(rng));
      return q;
    }
    case Distortion::kRandomLinear: {
      // A Gaussian matrix is full rank with probability one.
      return Gaussian(dt, dv, rng) / std::sqrt(static_cast<double>(dv));
    }
  }
  throw std::logic_error("unreachable distortion");
}

EmbeddingDataset Generate(const SynthConfig& config) {
  CheckSynthConfig(config);
  const Eigen::MatrixXd transform = DistortionMatrix(config);
  const auto dv = static_cast<Eigen::Index>(config.visual_dim);

  Rng rng = StreamFor(config.seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  EmbeddingDataset ds;
  ds.visual_dim = config.visual_dim;
  ds.text_dim = config.text_dim;
  const Split splits[3] = {Split::kBase, Split::kVal, Split::kNovel};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < config.classes_per_split[static_cast<std::size_t>(s)]; ++c) {
      Eigen::VectorXd dir(dv);
      do {
        for (Eigen::Index k = 0; k < dv; ++k) dir[k] = normal(rng);
      } while (dir.norm() == 0.0);
      const Eigen::VectorXd mean = config.class_separation * dir / dir.norm();

      ClassRecord rec;
      rec.name = fmt::format("{}_{}", SplitName(splits[s]), c);
      rec.split = splits[s];
      rec.textual_embedding = RoundToF32(transform * mean);
      rec.visual_features.reserve(config.samples_per_class);
      for (std::size_t i = 0; i < config.samples_per_class; ++i) {
        Eigen::VectorXd noise(dv);
        for (Eigen::Index k = 0; k < dv; ++k) noise[k] = normal(rng);
        rec.visual_features.push_back(RoundToF32(mean + config.cluster_spread * noise));
      }
      ds.classes.push_back(std::move(rec));
    }
  }
  return ds;
}

}  // namespace metaalign
