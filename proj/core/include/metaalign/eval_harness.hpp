#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metaalign/embedding_store.hpp"
#include "metaalign/maml.hpp"

namespace metaalign {

struct EvalResult {
  std::vector<double> episode_accuracies;
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;  // 1.96 * sample std (n-1) / sqrt(n)
  std::size_t n_episodes = 0;
  std::optional<std::vector<double>> per_query_true_probs;

  /// Mean of per_query_true_probs. Throws if they were not collected.
  double MeanTrueProb() const;
};

/// Fills mean and ci95 from `accuracies`. n == 1 gives a zero halfwidth;
/// n == 0 throws std::invalid_argument.
EvalResult Aggregate(std::vector<double> accuracies);

struct EvalOptions {
  std::size_t workers = 1;
  bool collect_probs = true;
};

/// Meta-test protocol: episode i comes from EpisodeStream(split, base_seed)
/// index i; each runs MetaTestAdapt and is scored by query accuracy. Results
/// are merged in episode order, so the output does not depend on `workers`.
EvalResult Evaluate(const ModelParams& params, const EmbeddingDataset& dataset, Split split,
                    const TrainConfig& config, std::size_t n_episodes, std::uint64_t base_seed,
                    const EvalOptions& options = {});

/// Identity heads (requires d_v == d_t), cosine metric, zero inner steps:
/// raw visual features scored directly against raw textual embeddings.
ModelParams DirectAlignmentModel(const EmbeddingDataset& dataset);

EvalResult DirectAlignmentEval(const EmbeddingDataset& dataset, Split split, const TrainConfig& config,
                               std::size_t n_episodes, std::uint64_t base_seed, const EvalOptions& options = {});

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

/// Uniform bins over [0, 1], right-exclusive except the last, which also
/// takes 1.0.
std::vector<HistogramBin> ProbabilityHistogram(const EvalResult& result, std::size_t n_bins = 20);
std::vector<HistogramBin> ProbabilityHistogram(const std::vector<double>& probs, std::size_t n_bins = 20);

enum class SweepAxis { kInnerTau, kInnerSteps };

std::string_view SweepAxisName(SweepAxis axis);
SweepAxis ParseSweepAxis(std::string_view name);

struct SweepOptions {
  /// inner_steps sweeps reuse one trained model unless this is set;
  /// inner_tau sweeps always retrain.
  bool retrain_inner_steps = false;
  Split train_split = Split::kBase;
  Split eval_split = Split::kNovel;
  EvalOptions eval;
};

struct SweepRow {
  double value = 0.0;
  EvalResult result;
};

/// `train` is called with the per-value config and returns trained params.
/// Defaults to MetaTrain on options.train_split.
using SweepTrainer = std::function<ModelParams(const TrainConfig&)>;

std::vector<SweepRow> Sweep(const EmbeddingDataset& dataset, const TrainConfig& config, SweepAxis axis,
                            const std::vector<double>& values, std::size_t n_episodes, std::uint64_t base_seed,
                            const SweepOptions& options = {}, const SweepTrainer& train = {});

// CSV emitters; numbers use round-trip precision so output is reproducible
// byte for byte.
std::string EvalSummaryCsv(const EvalResult& result);
std::string EvalEpisodesCsv(const EvalResult& result);
std::string HistogramCsv(const std::vector<HistogramBin>& bins);
std::string SweepCsv(SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace metaalign
