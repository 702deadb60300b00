#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "metaalign/dual.hpp"
#include "metaalign/metric.hpp"

namespace metaalign {

/// Linear projection heads into the shared d-dim embedding space.
/// visual: d x d_v, text: d x d_t.
template <typename S>
struct BasicHeads {
  Mat<S> visual;
  Mat<S> text;

  Eigen::Index dim() const { return visual.rows(); }

  void CheckInvariants() const {
    if (visual.rows() != text.rows() || visual.rows() == 0) {
      throw DimensionError(
          fmt::format("projection heads disagree on output dim (visual {}, text {})", visual.rows(), text.rows()));
    }
  }
};

using ProjectionHeads = BasicHeads<double>;

/// Stacks vectors as matrix rows. All vectors must share a size.
Eigen::MatrixXd StackRows(const std::vector<Eigen::VectorXd>& rows);

/// z = W_I v and t = W_T u, unit-normalized unless `kind` is mlp. Throws
/// std::domain_error when a projection has zero norm.
std::pair<Eigen::VectorXd, Eigen::VectorXd> Embed(const ProjectionHeads& heads, MetricKind kind,
                                                  const Eigen::VectorXd& raw_visual,
                                                  const Eigen::VectorXd& raw_textual);

enum class GradScope {
  kNone,
  kMetric,  // metric parameters only (inner loop)
  kAll,     // metric parameters and both heads
};

template <typename S>
struct ContrastiveEval {
  S value{};
  std::vector<double> true_prob;
  Mat<double> prob;  // softmax rows, values only
  Vec<S> grad_metric;
  Mat<S> grad_visual;
  Mat<S> grad_text;
};

/// Mean InfoNCE loss over `samples` (rows, raw visual features) against
/// `class_texts` (rows, raw textual vectors) at temperature tau:
///   -1/n sum_i log softmax_c(M(z_i, t_c) / tau)[y_i]
/// Row maxima are subtracted before exponentiation. Gradients flow through
/// the normalization of both projections.
template <typename S>
ContrastiveEval<S> EvaluateContrastive(const BasicHeads<S>& heads, const BasicMetricParams<S>& metric,
                                       const Eigen::MatrixXd& samples, const std::vector<int>& labels,
                                       const Eigen::MatrixXd& class_texts, double tau, GradScope scope);

extern template ContrastiveEval<double> EvaluateContrastive(const BasicHeads<double>&,
                                                            const BasicMetricParams<double>&,
                                                            const Eigen::MatrixXd&, const std::vector<int>&,
                                                            const Eigen::MatrixXd&, double, GradScope);
extern template ContrastiveEval<Dual> EvaluateContrastive(const BasicHeads<Dual>&, const BasicMetricParams<Dual>&,
                                                          const Eigen::MatrixXd&, const std::vector<int>&,
                                                          const Eigen::MatrixXd&, double, GradScope);

struct LossGradients {
  Eigen::MatrixXd visual;
  Eigen::MatrixXd text;
  Eigen::VectorXd metric;
};

struct LossReport {
  double value = 0.0;  // nats
  std::vector<double> per_sample_true_prob;
  LossGradients grads;
};

LossReport ContrastiveLoss(const ProjectionHeads& heads, const MetricParams& metric,
                           const std::vector<Eigen::VectorXd>& samples, const std::vector<int>& labels,
                           const std::vector<Eigen::VectorXd>& class_texts, double tau);

struct Prediction {
  int index = 0;  // argmax of similarity, lowest index on ties
  Eigen::VectorXd prob;
};

std::vector<Prediction> Predict(const ProjectionHeads& heads, const MetricParams& metric,
                                const std::vector<Eigen::VectorXd>& query_visuals,
                                const std::vector<Eigen::VectorXd>& class_texts, double tau);

/// Softmax of one similarity row at temperature tau, max-shifted.
Eigen::VectorXd SoftmaxRow(const Eigen::VectorXd& similarities, double tau);

}  // namespace metaalign
