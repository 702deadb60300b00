#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "metaalign/embedding_store.hpp"
#include "metaalign/episodic_sampler.hpp"
#include "metaalign/metric.hpp"
#include "metaalign/objective.hpp"

namespace metaalign {

enum class GradOrder : std::uint8_t { kFirst = 1, kSecond = 2 };

std::string_view GradOrderName(GradOrder order);
GradOrder ParseGradOrder(std::string_view name);

struct TrainConfig {
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t m_query = 16;
  double inner_lr = 0.5;
  double outer_lr = 1e-3;
  std::size_t inner_steps = 25;
  double inner_tau = 0.2;
  double outer_tau = 0.1;
  MetricKind metric_kind = MetricKind::kBilinear;
  MetricInit metric_init = MetricInit::kNearIdentity;
  std::size_t mlp_hidden = 64;
  std::size_t embed_dim = 0;  // 0: use d_v
  GradOrder grad_order = GradOrder::kSecond;
  std::size_t meta_batch = 1;
  std::size_t epochs = 1;
  std::size_t episodes_per_epoch = 100;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;

  EpisodeShape shape() const { return {n_way, k_shot, m_query}; }
  /// Throws std::invalid_argument naming the first bad field.
  void Validate() const;
};

struct ModelParams {
  ProjectionHeads heads;
  MetricParams metric;

  void CheckInvariants() const;
  /// W_I | W_T | metric, each column-major.
  Eigen::VectorXd Flatten() const;
  void Unflatten(const Eigen::VectorXd& flat);
  Eigen::Index size() const;
};

/// Visual head starts at the identity when d == d_v (frozen-feature
/// stand-in for a pretrained encoder), otherwise N(0, 1/d_v). The textual
/// head is N(0, 1/d_t). The metric follows config.metric_init.
ModelParams InitModel(std::size_t visual_dim, std::size_t text_dim, const TrainConfig& config);

/// An episode as stacked matrices, ready for repeated loss evaluations.
struct EpisodeData {
  Eigen::MatrixXd support;
  std::vector<int> support_labels;
  Eigen::MatrixXd query;
  std::vector<int> query_labels;
  Eigen::MatrixXd class_texts;

  static EpisodeData From(const Episode& episode);
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t inner_step)
      : std::runtime_error(what), inner_step_(inner_step) {}
  std::size_t inner_step() const { return inner_step_; }

 private:
  std::size_t inner_step_;
};

/// One entry per inner step k: the metric parameters the step started from
/// and the support loss there.
struct UnrollTape {
  struct Step {
    Eigen::VectorXd metric_values;
    double support_loss = 0.0;
  };
  std::vector<Step> steps;
};

struct AdaptResult {
  MetricParams adapted;
  UnrollTape tape;
};

/// inner_steps full-batch SGD steps on the support loss at inner_tau,
/// updating only the metric parameters.
AdaptResult InnerAdapt(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config);
AdaptResult InnerAdapt(const ModelParams& params, const Episode& episode, const TrainConfig& config);

struct OuterResult {
  LossGradients grads;
  double query_loss = 0.0;
  double query_accuracy = 0.0;
  double support_loss_initial = 0.0;  // NaN when inner_steps == 0
  double support_loss_final = 0.0;
};

/// Gradient of the post-adaptation query loss at outer_tau w.r.t. all of
/// ModelParams. Second order reverse-traverses the tape, applying
///   a_k = a_{k+1} - alpha * H_mm(k) a_{k+1},   g_W -= alpha * H_Wm(k) a_{k+1}
/// with both Hessian-vector products from one forward-mode sweep of the
/// support gradient. First order stops at a_K.
OuterResult OuterGradient(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config);
OuterResult OuterGradient(const ModelParams& params, const Episode& episode, const TrainConfig& config);

/// L_Q(heads, InnerAdapt(params).adapted) at outer_tau; the composite
/// objective OuterGradient differentiates.
double CompositeQueryLoss(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config);

struct TrainLogRecord {
  std::size_t step = 0;
  std::uint64_t episode_seed = 0;  // stream index of the first episode in the step
  double support_loss_initial = 0.0;
  double support_loss_final = 0.0;
  double query_loss = 0.0;
  double query_accuracy = 0.0;
};

struct TrainState {
  ModelParams params;
  Eigen::VectorXd velocity;  // outer momentum buffer, flat layout
  std::size_t completed_steps = 0;
};

using TrainCallback = std::function<void(const TrainLogRecord&)>;

struct TrainResult {
  TrainState state;
  std::vector<TrainLogRecord> log;
};

/// Meta-training on the base split. Each outer step averages
/// OuterGradient over meta_batch episodes and applies SGD with momentum and
/// weight decay. Episode j of the run is stream index j of
/// EpisodeStream(base, config.seed). Passing `resume` continues from its
/// completed_steps.
TrainResult MetaTrain(const EmbeddingDataset& dataset, const TrainConfig& config,
                      const TrainCallback& callback = {}, std::optional<TrainState> resume = std::nullopt,
                      Split split = Split::kBase);

struct QueryOutcome {
  int predicted = 0;
  int label = 0;
  double true_prob = 0.0;
};

/// InnerAdapt on the support set, then Predict on the query set at
/// outer_tau. `params` is not modified.
std::vector<QueryOutcome> MetaTestAdapt(const ModelParams& params, const Episode& episode, const TrainConfig& config);

std::string_view CsvHeaderTrainLog();
std::string FormatTrainLogRow(const TrainLogRecord& r);

}  // namespace metaalign
