#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaalign/embedding_store.hpp"

namespace metaalign {

struct EpisodeShape {
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t m_query = 16;
};

/// One N-way K-shot M-query task. Local class index c refers to
/// class_names[c] and textual_embeddings[c].
struct Episode {
  std::vector<std::string> class_names;
  std::vector<Eigen::VectorXd> textual_embeddings;
  std::vector<Eigen::VectorXd> support;
  std::vector<int> support_labels;
  std::vector<Eigen::VectorXd> query;
  std::vector<int> query_labels;

  std::size_t n_way() const { return class_names.size(); }
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draws n_way classes of `split` uniformly without replacement, then
/// k_shot + m_query features of each without replacement; the first k_shot
/// go to the support set. Entries are grouped by local class.
Episode SampleEpisode(const EmbeddingDataset& dataset, Split split, const EpisodeShape& shape,
                      std::mt19937_64& rng);

/// Generator for episode `index` of the stream keyed by `base_seed`. Depends
/// only on (base_seed, index).
std::mt19937_64 EpisodeRng(std::uint64_t base_seed, std::uint64_t index);

/// Random-access episode stream: At(i) regenerates episode i from
/// (base_seed, i) alone, so consumption order does not matter.
class EpisodeStream {
 public:
  EpisodeStream(const EmbeddingDataset& dataset, Split split, EpisodeShape shape, std::uint64_t base_seed,
                std::size_t count);

  std::size_t size() const { return count_; }
  Episode At(std::size_t index) const;
  std::uint64_t base_seed() const { return base_seed_; }

 private:
  const EmbeddingDataset* dataset_;
  Split split_;
  EpisodeShape shape_;
  std::uint64_t base_seed_;
  std::size_t count_;
};

/// Materializes the first `count` episodes of the stream.
std::vector<Episode> SampleEpisodes(const EmbeddingDataset& dataset, Split split, const EpisodeShape& shape,
                                    std::uint64_t base_seed, std::size_t count);

/// Reorders local classes: new class c is old class perm[c]. Labels are
/// remapped accordingly; sample order is unchanged.
Episode PermuteClasses(const Episode& episode, const std::vector<std::size_t>& perm);

}  // namespace metaalign
