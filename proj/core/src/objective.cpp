#include "metaalign/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace metaalign {

Eigen::MatrixXd StackRows(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.cols()) {
      throw DimensionError(fmt::format("row {} has size {}, expected {}", i, rows[i].size(), out.cols()));
    }
    out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return out;
}

namespace {

template <typename S>
struct Projected {
  Mat<S> raw;        // W x, one row per input
  Mat<S> unit;       // row-normalized copy (or raw for mlp)
  Vec<S> norms;      // row norms of raw, when normalized
  bool normalized = false;
};

template <typename S>
Projected<S> Project(const Mat<S>& head, const Eigen::MatrixXd& inputs, bool normalize, const char* what) {
  if (inputs.cols() != head.cols()) {
    throw DimensionError(fmt::format("{} inputs have dim {}, head expects {}", what, inputs.cols(), head.cols()));
  }
  Projected<S> p;
  p.raw = inputs.cast<S>() * head.transpose();
  p.normalized = normalize;
  if (!normalize) {
    p.unit = p.raw;
    return p;
  }
  p.norms.resize(p.raw.rows());
  p.unit.resize(p.raw.rows(), p.raw.cols());
  for (Eigen::Index i = 0; i < p.raw.rows(); ++i) {
    const S n = p.raw.row(i).norm();
    if (!(ValueOf(n) > 0.0)) {
      throw std::domain_error(fmt::format("{} projection {} has zero norm", what, i));
    }
    p.norms[i] = n;
    p.unit.row(i) = p.raw.row(i) / n;
  }
  return p;
}

// Adjoint of row-normalization: d(x/|x|) = (I - u u^T) / |x|.
template <typename S>
Mat<S> NormalizeBackward(const Projected<S>& p, const Mat<S>& d_unit) {
  if (!p.normalized) return d_unit;
  Mat<S> d_raw(d_unit.rows(), d_unit.cols());
  for (Eigen::Index i = 0; i < d_unit.rows(); ++i) {
    const S radial = p.unit.row(i).dot(d_unit.row(i));
    d_raw.row(i) = (d_unit.row(i) - radial * p.unit.row(i)) / p.norms[i];
  }
  return d_raw;
}

void CheckTau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument(fmt::format("temperature must be positive and finite, got {}", tau));
  }
}

}  // namespace

Eigen::VectorXd SoftmaxRow(const Eigen::VectorXd& similarities, double tau) {
  CheckTau(tau);
  const Eigen::ArrayXd logits = similarities.array() / tau;
  const Eigen::ArrayXd e = (logits - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

template <typename S>
ContrastiveEval<S> EvaluateContrastive(const BasicHeads<S>& heads, const BasicMetricParams<S>& metric,
                                       const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                                       const Eigen::MatrixXd& class_texts, double tau, GradScope scope) {
  CheckTau(tau);
  heads.CheckInvariants();
  metric.CheckInvariants();
  const Eigen::Index n = samples.rows();
  const Eigen::Index n_classes = class_texts.rows();
  if (n == 0) throw std::invalid_argument("contrastive loss needs at least one sample");
  if (n_classes == 0) throw std::invalid_argument("contrastive loss needs at least one class");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument(fmt::format("{} labels for {} samples", labels.size(), n));
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw std::invalid_argument(fmt::format("label {} out of range for {} classes", y, n_classes));
    }
  }
  if (metric.dim != heads.dim()) {
    throw DimensionError(fmt::format("metric dim {} != head output dim {}", metric.dim, heads.dim()));
  }

  using std::exp;
  using std::log;
  const bool normalize = metric.kind != MetricKind::kMlp;
  const auto z = Project<S>(heads.visual, samples, normalize, "visual");
  const auto t = Project<S>(heads.text, class_texts, normalize, "textual");
  const Mat<S> sim = SimilarityMatrix(metric, z.unit, t.unit);

  ContrastiveEval<S> out;
  out.true_prob.resize(static_cast<std::size_t>(n));
  out.prob.resize(n, n_classes);
  Mat<S> adjoint(n, n_classes);
  S total(0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec<S> logits = sim.row(i).transpose() / S(tau);
    double shift = ValueOf(logits[0]);
    for (Eigen::Index c = 1; c < n_classes; ++c) shift = std::max(shift, ValueOf(logits[c]));
    Vec<S> e(n_classes);
    S denom(0.0);
    for (Eigen::Index c = 0; c < n_classes; ++c) {
      e[c] = exp(logits[c] - S(shift));
      denom += e[c];
    }
    const S lse = S(shift) + log(denom);
    const auto y = labels[static_cast<std::size_t>(i)];
    const S log_true = logits[y] - lse;
    total -= log_true;
    out.true_prob[static_cast<std::size_t>(i)] = std::exp(ValueOf(log_true));
    for (Eigen::Index c = 0; c < n_classes; ++c) {
      const S p = e[c] / denom;
      out.prob(i, c) = ValueOf(p);
      // d loss / d sim_ic = (p_ic - [c == y_i]) / (tau n)
      adjoint(i, c) = (p - S(c == y ? 1.0 : 0.0)) * S(inv_n / tau);
    }
  }
  out.value = total * S(inv_n);
  if (scope == GradScope::kNone) return out;

  auto back = BackpropSimilarity(metric, z.unit, t.unit, adjoint);
  out.grad_metric = std::move(back.params);
  if (scope == GradScope::kAll) {
    out.grad_visual = NormalizeBackward(z, back.z).transpose() * samples.cast<S>();
    out.grad_text = NormalizeBackward(t, back.t).transpose() * class_texts.cast<S>();
  }
  return out;
}

template ContrastiveEval<double> EvaluateContrastive(const BasicHeads<double>&, const BasicMetricParams<double>&,
                                                     const Eigen::MatrixXd&, const std::vector<int>&,
                                                     const Eigen::MatrixXd&, double, GradScope);
template ContrastiveEval<Dual> EvaluateContrastive(const BasicHeads<Dual>&, const BasicMetricParams<Dual>&,
                                                   const Eigen::MatrixXd&, const std::vector<int>&,
                                                   const Eigen::MatrixXd&, double, GradScope);

std::pair<Eigen::VectorXd, Eigen::VectorXd> Embed(const ProjectionHeads& heads, MetricKind kind,
                                                  const Eigen::VectorXd& raw_visual,
                                                  const Eigen::VectorXd& raw_textual) {
  heads.CheckInvariants();
  const bool normalize = kind != MetricKind::kMlp;
  const auto z = Project<double>(heads.visual, raw_visual.transpose(), normalize, "visual");
  const auto t = Project<double>(heads.text, raw_textual.transpose(), normalize, "textual");
  return {z.unit.row(0).transpose(), t.unit.row(0).transpose()};
}

LossReport ContrastiveLoss(const ProjectionHeads& heads, const MetricParams& metric,
                           const std::vector<Eigen::VectorXd>& samples, const std::vector<int>& labels,
                           const std::vector<Eigen::VectorXd>& class_texts, double tau) {
  auto eval = EvaluateContrastive(heads, metric, StackRows(samples), labels, StackRows(class_texts), tau,
                                  GradScope::kAll);
  LossReport report;
  report.value = eval.value;
  report.per_sample_true_prob = std::move(eval.true_prob);
  report.grads.visual = std::move(eval.grad_visual);
  report.grads.text = std::move(eval.grad_text);
  report.grads.metric = std::move(eval.grad_metric);
  return report;
}

std::vector<Prediction> Predict(const ProjectionHeads& heads, const MetricParams& metric,
                                const std::vector<Eigen::VectorXd>& query_visuals,
                                const std::vector<Eigen::VectorXd>& class_texts, double tau) {
  CheckTau(tau);
  heads.CheckInvariants();
  metric.CheckInvariants();
  if (query_visuals.empty() || class_texts.empty()) return {};
  const bool normalize = metric.kind != MetricKind::kMlp;
  const auto z = Project<double>(heads.visual, StackRows(query_visuals), normalize, "visual");
  const auto t = Project<double>(heads.text, StackRows(class_texts), normalize, "textual");
  const Eigen::MatrixXd sim = SimilarityMatrix(metric, z.unit, t.unit);

  std::vector<Prediction> out(query_visuals.size());
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    auto& pred = out[static_cast<std::size_t>(i)];
    pred.index = 0;
    for (Eigen::Index c = 1; c < sim.cols(); ++c) {
      if (sim(i, c) > sim(i, pred.index)) pred.index = static_cast<int>(c);
    }
    pred.prob = SoftmaxRow(sim.row(i).transpose(), tau);
  }
  return out;
}

}  // namespace metaalign
