#include "metaalign/episodic_sampler.hpp"

#include <numeric>

#include <fmt/format.h>

namespace metaalign {

namespace {

// Partial Fisher-Yates: the first k entries of the returned vector are a
// uniform draw without replacement from [0, n).
std::vector<std::size_t> DrawWithoutReplacement(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

Episode SampleEpisode(const EmbeddingDataset& dataset, Split split, const EpisodeShape& shape,
                      std::mt19937_64& rng) {
  if (shape.n_way == 0 || shape.k_shot == 0 || shape.m_query == 0) {
    throw SamplerError("episode shape must have n_way, k_shot and m_query >= 1");
  }
  const auto candidates = dataset.ClassesInSplit(split);
  std::vector<std::size_t> eligible;
  for (auto ci : candidates) {
    const auto& c = dataset.classes[ci];
    if (!c.textual_embedding) {
      throw SamplerError(fmt::format("class '{}' in split '{}' has no textual embedding", c.name, SplitName(split)));
    }
    eligible.push_back(ci);
  }
  if (eligible.size() < shape.n_way) {
    throw SamplerError(fmt::format("split '{}' has {} classes, need {} for an {}-way episode", SplitName(split),
                                   eligible.size(), shape.n_way, shape.n_way));
  }

  const std::size_t per_class = shape.k_shot + shape.m_query;
  const auto chosen = DrawWithoutReplacement(eligible.size(), shape.n_way, rng);

  Episode ep;
  ep.support.reserve(shape.n_way * shape.k_shot);
  ep.query.reserve(shape.n_way * shape.m_query);
  for (std::size_t local = 0; local < chosen.size(); ++local) {
    const auto& c = dataset.classes[eligible[chosen[local]]];
    if (c.visual_features.size() < per_class) {
      throw SamplerError(fmt::format("class '{}' has {} features, need {} (k_shot={} + m_query={})", c.name,
                                     c.visual_features.size(), per_class, shape.k_shot, shape.m_query));
    }
    ep.class_names.push_back(c.name);
    ep.textual_embeddings.push_back(*c.textual_embedding);
    const auto picks = DrawWithoutReplacement(c.visual_features.size(), per_class, rng);
    for (std::size_t j = 0; j < per_class; ++j) {
      const auto& f = c.visual_features[picks[j]];
      if (j < shape.k_shot) {
        ep.support.push_back(f);
        ep.support_labels.push_back(static_cast<int>(local));
      } else {
        ep.query.push_back(f);
        ep.query_labels.push_back(static_cast<int>(local));
      }
    }
  }
  return ep;
}

std::mt19937_64 EpisodeRng(std::uint64_t base_seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x65706973u};
  return std::mt19937_64(seq);
}

EpisodeStream::EpisodeStream(const EmbeddingDataset& dataset, Split split, EpisodeShape shape,
                             std::uint64_t base_seed, std::size_t count)
    : dataset_(&dataset), split_(split), shape_(shape), base_seed_(base_seed), count_(count) {}

Episode EpisodeStream::At(std::size_t index) const {
  if (index >= count_) {
    throw std::out_of_range(fmt::format("episode {} out of range (stream has {})", index, count_));
  }
  auto rng = EpisodeRng(base_seed_, index);
  return SampleEpisode(*dataset_, split_, shape_, rng);
}

std::vector<Episode> SampleEpisodes(const EmbeddingDataset& dataset, Split split, const EpisodeShape& shape,
                                    std::uint64_t base_seed, std::size_t count) {
  EpisodeStream stream(dataset, split, shape, base_seed, count);
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(stream.At(i));
  return out;
}

Episode PermuteClasses(const Episode& episode, const std::vector<std::size_t>& perm) {
  const auto n = episode.n_way();
  if (perm.size() != n) throw std::invalid_argument("permutation size must equal n_way");
  std::vector<int> new_of_old(n, -1);
  for (std::size_t c = 0; c < n; ++c) {
    if (perm[c] >= n || new_of_old[perm[c]] != -1) throw std::invalid_argument("not a permutation");
    new_of_old[perm[c]] = static_cast<int>(c);
  }
  Episode out = episode;
  for (std::size_t c = 0; c < n; ++c) {
    out.class_names[c] = episode.class_names[perm[c]];
    out.textual_embeddings[c] = episode.textual_embeddings[perm[c]];
  }
  for (auto& y : out.support_labels) y = new_of_old[static_cast<std::size_t>(y)];
  for (auto& y : out.query_labels) y = new_of_old[static_cast<std::size_t>(y)];
  return out;
}

}  // namespace metaalign
