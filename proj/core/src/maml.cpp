#include "metaalign/maml.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace metaalign {

std::string_view GradOrderName(GradOrder order) { return order == GradOrder::kFirst ? "first" : "second"; }

GradOrder ParseGradOrder(std::string_view name) {
  if (name == "first") return GradOrder::kFirst;
  if (name == "second") return GradOrder::kSecond;
  throw std::invalid_argument(fmt::format("unknown grad order '{}' (expected first|second)", name));
}

void TrainConfig::Validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(fmt::format("{} must be positive and finite, got {}", name, v));
    }
  };
  auto at_least_one = [](std::size_t v, const char* name) {
    if (v < 1) throw std::invalid_argument(fmt::format("{} must be >= 1", name));
  };
  at_least_one(n_way, "n_way");
  at_least_one(k_shot, "k_shot");
  at_least_one(m_query, "m_query");
  at_least_one(meta_batch, "meta_batch");
  positive(inner_lr, "inner_lr");
  positive(outer_lr, "outer_lr");
  positive(inner_tau, "inner_tau");
  positive(outer_tau, "outer_tau");
  if (metric_kind == MetricKind::kMlp) at_least_one(mlp_hidden, "mlp_hidden");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw std::invalid_argument("weight_decay must be finite and non-negative");
  }
}

void ModelParams::CheckInvariants() const {
  heads.CheckInvariants();
  metric.CheckInvariants();
  if (metric.dim != heads.dim()) {
    throw DimensionError(fmt::format("metric dim {} != head output dim {}", metric.dim, heads.dim()));
  }
}

Eigen::Index ModelParams::size() const { return heads.visual.size() + heads.text.size() + metric.size(); }

Eigen::VectorXd ModelParams::Flatten() const {
  Eigen::VectorXd flat(size());
  flat << heads.visual.reshaped(), heads.text.reshaped(), metric.values;
  return flat;
}

void ModelParams::Unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != size()) {
    throw DimensionError(fmt::format("flat parameter vector has {} entries, model has {}", flat.size(), size()));
  }
  Eigen::Index off = 0;
  heads.visual.reshaped() = flat.segment(off, heads.visual.size());
  off += heads.visual.size();
  heads.text.reshaped() = flat.segment(off, heads.text.size());
  off += heads.text.size();
  metric.values = flat.segment(off, metric.size());
}

namespace {

std::mt19937_64 InitRng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x696e6974u};
  return std::mt19937_64(seq);
}

Eigen::MatrixXd GaussianMatrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * normal(rng);
  }
  return m;
}

double MeanOf(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

template <typename Derived>
Eigen::MatrixXd Tangents(const Eigen::MatrixBase<Derived>& m) {
  return m.unaryExpr([](const Dual& d) { return d.tan; });
}

}  // namespace

ModelParams InitModel(std::size_t visual_dim, std::size_t text_dim, const TrainConfig& config) {
  const auto dv = static_cast<Eigen::Index>(visual_dim);
  const auto dt = static_cast<Eigen::Index>(text_dim);
  const auto d = static_cast<Eigen::Index>(config.embed_dim == 0 ? visual_dim : config.embed_dim);
  if (dv <= 0 || dt <= 0 || d <= 0) throw DimensionError("model dimensions must be positive");
  auto rng = InitRng(config.seed);
  ModelParams p;
  p.heads.visual = d == dv ? Eigen::MatrixXd::Identity(d, dv)
                           : GaussianMatrix(d, dv, 1.0 / std::sqrt(static_cast<double>(dv)), rng);
  p.heads.text = GaussianMatrix(d, dt, 1.0 / std::sqrt(static_cast<double>(dt)), rng);
  p.metric = InitMetric(config.metric_kind, d, static_cast<Eigen::Index>(config.mlp_hidden), config.metric_init, rng);
  return p;
}

EpisodeData EpisodeData::From(const Episode& episode) {
  EpisodeData d;
  d.support = StackRows(episode.support);
  d.support_labels = episode.support_labels;
  d.query = StackRows(episode.query);
  d.query_labels = episode.query_labels;
  d.class_texts = StackRows(episode.textual_embeddings);
  return d;
}

AdaptResult InnerAdapt(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config) {
  if (episode.support.rows() == 0) throw std::invalid_argument("inner adaptation needs a non-empty support set");
  AdaptResult out;
  out.adapted = params.metric;
  out.tape.steps.reserve(config.inner_steps);
  for (std::size_t k = 0; k < config.inner_steps; ++k) {
    const auto eval = EvaluateContrastive(params.heads, out.adapted, episode.support, episode.support_labels,
                                          episode.class_texts, config.inner_tau, GradScope::kMetric);
    if (!std::isfinite(eval.value) || !eval.grad_metric.allFinite()) {
      throw DivergenceError(fmt::format("support loss or gradient became non-finite at inner step {}", k), k);
    }
    out.tape.steps.push_back({out.adapted.values, eval.value});
    out.adapted.values -= config.inner_lr * eval.grad_metric;
  }
  if (!out.adapted.values.allFinite()) {
    throw DivergenceError(fmt::format("adapted metric became non-finite after {} inner steps", config.inner_steps),
                          config.inner_steps);
  }
  return out;
}

AdaptResult InnerAdapt(const ModelParams& params, const Episode& episode, const TrainConfig& config) {
  return InnerAdapt(params, EpisodeData::From(episode), config);
}

OuterResult OuterGradient(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config) {
  if (episode.query.rows() == 0) throw std::invalid_argument("outer gradient needs a non-empty query set");
  const auto adapt = InnerAdapt(params, episode, config);
  const auto q = EvaluateContrastive(params.heads, adapt.adapted, episode.query, episode.query_labels,
                                     episode.class_texts, config.outer_tau, GradScope::kAll);

  OuterResult out;
  out.query_loss = q.value;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < q.prob.rows(); ++i) {
    Eigen::Index best = 0;
    q.prob.row(i).maxCoeff(&best);
    if (best == episode.query_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  out.query_accuracy = static_cast<double>(correct) / static_cast<double>(q.prob.rows());
  out.support_loss_initial = adapt.tape.steps.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                      : adapt.tape.steps.front().support_loss;
  out.support_loss_final = EvaluateContrastive(params.heads, adapt.adapted, episode.support, episode.support_labels,
                                               episode.class_texts, config.inner_tau, GradScope::kNone)
                               .value;

  Eigen::VectorXd adjoint = q.grad_metric;
  out.grads.visual = q.grad_visual;
  out.grads.text = q.grad_text;

  if (config.grad_order == GradOrder::kSecond && !adapt.tape.steps.empty()) {
    const BasicHeads<Dual> heads{params.heads.visual.cast<Dual>(), params.heads.text.cast<Dual>()};
    for (auto k = adapt.tape.steps.size(); k-- > 0;) {
      const auto& theta = adapt.tape.steps[k].metric_values;
      Vec<Dual> seeded(theta.size());
      for (Eigen::Index i = 0; i < theta.size(); ++i) seeded[i] = Dual(theta[i], adjoint[i]);
      const auto e = EvaluateContrastive(heads, params.metric.WithValues(std::move(seeded)), episode.support,
                                         episode.support_labels, episode.class_texts, config.inner_tau,
                                         GradScope::kAll);
      // Tangents of the support gradient are H_{.,m} a_{k+1}.
      out.grads.visual -= config.inner_lr * Tangents(e.grad_visual);
      out.grads.text -= config.inner_lr * Tangents(e.grad_text);
      adjoint -= config.inner_lr * Tangents(e.grad_metric);
    }
  }
  out.grads.metric = std::move(adjoint);

  if (!std::isfinite(out.query_loss) || !out.grads.visual.allFinite() || !out.grads.text.allFinite() ||
      !out.grads.metric.allFinite()) {
    throw DivergenceError("outer gradient became non-finite", config.inner_steps);
  }
  return out;
}

OuterResult OuterGradient(const ModelParams& params, const Episode& episode, const TrainConfig& config) {
  return OuterGradient(params, EpisodeData::From(episode), config);
}

double CompositeQueryLoss(const ModelParams& params, const EpisodeData& episode, const TrainConfig& config) {
  const auto adapt = InnerAdapt(params, episode, config);
  return EvaluateContrastive(params.heads, adapt.adapted, episode.query, episode.query_labels, episode.class_texts,
                             config.outer_tau, GradScope::kNone)
      .value;
}

TrainResult MetaTrain(const EmbeddingDataset& dataset, const TrainConfig& config, const TrainCallback& callback,
                      std::optional<TrainState> resume, Split split) {
  config.Validate();
  TrainResult result;
  if (resume) {
    result.state = std::move(*resume);
    result.state.params.CheckInvariants();
    if (result.state.velocity.size() != result.state.params.size()) {
      result.state.velocity = Eigen::VectorXd::Zero(result.state.params.size());
    }
  } else {
    result.state.params = InitModel(dataset.visual_dim, dataset.text_dim, config);
    result.state.velocity = Eigen::VectorXd::Zero(result.state.params.size());
  }

  const std::size_t total_steps = config.epochs * config.episodes_per_epoch;
  const EpisodeStream stream(dataset, split, config.shape(), config.seed, total_steps * config.meta_batch);
  auto& state = result.state;
  for (std::size_t step = state.completed_steps; step < total_steps; ++step) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.params.size());
    TrainLogRecord rec;
    rec.step = step;
    rec.episode_seed = step * config.meta_batch;
    std::vector<double> ls0, ls1, lq, acc;
    for (std::size_t b = 0; b < config.meta_batch; ++b) {
      const auto index = step * config.meta_batch + b;
      const auto episode = EpisodeData::From(stream.At(index));
      OuterResult r;
      try {
        r = OuterGradient(state.params, episode, config);
      } catch (const DivergenceError& e) {
        throw DivergenceError(fmt::format("outer step {} episode {}: {}", step, index, e.what()), e.inner_step());
      }
      Eigen::VectorXd flat(grad.size());
      flat << r.grads.visual.reshaped(), r.grads.text.reshaped(), r.grads.metric;
      grad += flat;
      ls0.push_back(r.support_loss_initial);
      ls1.push_back(r.support_loss_final);
      lq.push_back(r.query_loss);
      acc.push_back(r.query_accuracy);
    }
    grad /= static_cast<double>(config.meta_batch);

    Eigen::VectorXd theta = state.params.Flatten();
    grad += config.weight_decay * theta;
    state.velocity = config.momentum * state.velocity + grad;
    theta -= config.outer_lr * state.velocity;
    state.params.Unflatten(theta);
    state.completed_steps = step + 1;

    rec.support_loss_initial = MeanOf(ls0);
    rec.support_loss_final = MeanOf(ls1);
    rec.query_loss = MeanOf(lq);
    rec.query_accuracy = MeanOf(acc);
    result.log.push_back(rec);
    if (callback) callback(rec);
  }
  return result;
}

std::vector<QueryOutcome> MetaTestAdapt(const ModelParams& params, const Episode& episode, const TrainConfig& config) {
  const auto data = EpisodeData::From(episode);
  const auto adapt = InnerAdapt(params, data, config);
  const auto preds = Predict(params.heads, adapt.adapted, episode.query, episode.textual_embeddings, config.outer_tau);
  std::vector<QueryOutcome> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int y = episode.query_labels[i];
    out[i] = {preds[i].index, y, preds[i].prob[y]};
  }
  return out;
}

std::string_view CsvHeaderTrainLog() {
  return "step,episode_seed,L_S_initial,L_S_final,L_Q,query_accuracy";
}

std::string FormatTrainLogRow(const TrainLogRecord& r) {
  return fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}", r.step, r.episode_seed, r.support_loss_initial,
                     r.support_loss_final, r.query_loss, r.query_accuracy);
}

}  // namespace metaalign
