#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "metaalign/embedding_store.hpp"

namespace metaalign {

enum class Distortion { kNone, kOrthogonalRotation, kRotationPlusScaling, kRandomLinear };

std::string_view DistortionName(Distortion d);
Distortion ParseDistortion(std::string_view name);

struct SynthConfig {
  std::array<std::size_t, 3> classes_per_split = {20, 0, 5};  // base, val, novel
  std::size_t visual_dim = 16;
  std::size_t text_dim = 16;
  std::size_t samples_per_class = 40;
  double cluster_spread = 0.3;
  double class_separation = 1.0;
  Distortion distortion = Distortion::kOrthogonalRotation;
  std::uint64_t seed = 42;
};

/// Throws std::invalid_argument if `config` is inconsistent.
void CheckSynthConfig(const SynthConfig& config);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// column signs fixed by diag(R).
Eigen::MatrixXd RandomOrthogonal(std::size_t dim, std::mt19937_64& rng);

/// The text-side map T applied to class means, drawn from a stream seeded
/// only by `config.seed`, so it is identical across calls.
Eigen::MatrixXd DistortionMatrix(const SynthConfig& config);

/// Class c gets a visual mean mu_c drawn uniformly on the sphere of radius
/// class_separation, features mu_c + cluster_spread * N(0, I) and textual
/// embedding T * mu_c. All values are rounded to f32 so the dataset survives
/// an FSEB1 round trip unchanged. Classes are named "<split>_<index>".
EmbeddingDataset Generate(const SynthConfig& config);

}  // namespace metaalign
