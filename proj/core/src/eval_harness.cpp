#include "metaalign/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace metaalign {

double EvalResult::MeanTrueProb() const {
  if (!per_query_true_probs || per_query_true_probs->empty()) {
    throw std::invalid_argument("evaluation result carries no per-query probabilities");
  }
  double s = 0.0;
  for (double p : *per_query_true_probs) s += p;
  return s / static_cast<double>(per_query_true_probs->size());
}

EvalResult Aggregate(std::vector<double> accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("cannot aggregate zero episodes");
  EvalResult r;
  r.n_episodes = accuracies.size();
  r.episode_accuracies = std::move(accuracies);
  const double n = static_cast<double>(r.n_episodes);
  double sum = 0.0;
  for (double a : r.episode_accuracies) sum += a;
  r.mean_accuracy = sum / n;
  if (r.n_episodes > 1) {
    double ss = 0.0;
    for (double a : r.episode_accuracies) ss += (a - r.mean_accuracy) * (a - r.mean_accuracy);
    const double sample_std = std::sqrt(ss / (n - 1.0));
    r.ci95_halfwidth = 1.96 * sample_std / std::sqrt(n);
  }
  return r;
}

namespace {

struct EpisodeScore {
  double accuracy = 0.0;
  std::vector<double> true_probs;
};

// Runs fn(i) for i in [0, n) across `workers` threads; results land in slot i.
template <typename Fn>
std::vector<EpisodeScore> ParallelEpisodes(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<EpisodeScore> out(n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

EvalResult Collect(std::vector<EpisodeScore> scores, bool collect_probs) {
  std::vector<double> acc;
  acc.reserve(scores.size());
  std::vector<double> probs;
  for (auto& s : scores) {
    acc.push_back(s.accuracy);
    if (collect_probs) probs.insert(probs.end(), s.true_probs.begin(), s.true_probs.end());
  }
  auto r = Aggregate(std::move(acc));
  if (collect_probs) r.per_query_true_probs = std::move(probs);
  return r;
}

}  // namespace

EvalResult Evaluate(const ModelParams& params, const EmbeddingDataset& dataset, Split split,
                    const TrainConfig& config, std::size_t n_episodes, std::uint64_t base_seed,
                    const EvalOptions& options) {
  config.Validate();
  params.CheckInvariants();
  const EpisodeStream stream(dataset, split, config.shape(), base_seed, n_episodes);
  auto scores = ParallelEpisodes(n_episodes, options.workers, [&](std::size_t i) {
    const auto outcomes = MetaTestAdapt(params, stream.At(i), config);
    EpisodeScore s;
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
      if (o.predicted == o.label) ++correct;
      s.true_probs.push_back(o.true_prob);
    }
    s.accuracy = static_cast<double>(correct) / static_cast<double>(outcomes.size());
    return s;
  });
  return Collect(std::move(scores), options.collect_probs);
}

ModelParams DirectAlignmentModel(const EmbeddingDataset& dataset) {
  if (dataset.visual_dim != dataset.text_dim) {
    throw DimensionError(fmt::format("direct alignment needs d_v == d_t (got {} and {})", dataset.visual_dim,
                                     dataset.text_dim));
  }
  const auto d = static_cast<Eigen::Index>(dataset.visual_dim);
  ModelParams p;
  p.heads.visual = Eigen::MatrixXd::Identity(d, d);
  p.heads.text = Eigen::MatrixXd::Identity(d, d);
  p.metric = MetricParams::Zeros(MetricKind::kCosine, d);
  return p;
}

EvalResult DirectAlignmentEval(const EmbeddingDataset& dataset, Split split, const TrainConfig& config,
                               std::size_t n_episodes, std::uint64_t base_seed, const EvalOptions& options) {
  TrainConfig direct = config;
  direct.metric_kind = MetricKind::kCosine;
  direct.inner_steps = 0;
  EvalOptions opts = options;
  opts.collect_probs = true;
  return Evaluate(DirectAlignmentModel(dataset), dataset, split, direct, n_episodes, base_seed, opts);
}

std::vector<HistogramBin> ProbabilityHistogram(const std::vector<double>& probs, std::size_t n_bins) {
  if (n_bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (probs.empty()) throw std::invalid_argument("histogram needs at least one probability");
  std::vector<HistogramBin> bins(n_bins);
  // Edges are b / n rounded once, so 0.95 is exactly the low edge of bin 19 of 20.
  const double n = static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].low = static_cast<double>(b) / n;
    bins[b].high = static_cast<double>(b + 1) / n;
  }
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument(fmt::format("probability {} outside [0, 1]", p));
    }
    // floor(p * n) can land one bin off at an edge; settle against the edges.
    std::size_t b = static_cast<std::size_t>(p * static_cast<double>(n_bins));
    b = std::min(b, n_bins - 1);
    while (b > 0 && p < bins[b].low) --b;
    while (b + 1 < n_bins && p >= bins[b + 1].low) ++b;
    ++bins[b].count;
  }
  return bins;
}

std::vector<HistogramBin> ProbabilityHistogram(const EvalResult& result, std::size_t n_bins) {
  if (!result.per_query_true_probs) {
    throw std::invalid_argument("evaluation result carries no per-query probabilities");
  }
  return ProbabilityHistogram(*result.per_query_true_probs, n_bins);
}

std::string_view SweepAxisName(SweepAxis axis) { return axis == SweepAxis::kInnerTau ? "inner_tau" : "inner_steps"; }

SweepAxis ParseSweepAxis(std::string_view name) {
  if (name == "inner_tau") return SweepAxis::kInnerTau;
  if (name == "inner_steps") return SweepAxis::kInnerSteps;
  throw std::invalid_argument(fmt::format("unknown sweep axis '{}' (expected inner_tau|inner_steps)", name));
}

std::vector<SweepRow> Sweep(const EmbeddingDataset& dataset, const TrainConfig& config, SweepAxis axis,
                            const std::vector<double>& values, std::size_t n_episodes, std::uint64_t base_seed,
                            const SweepOptions& options, const SweepTrainer& train) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  const SweepTrainer trainer = train ? train : [&](const TrainConfig& c) {
    return MetaTrain(dataset, c, {}, std::nullopt, options.train_split).state.params;
  };

  auto with_value = [&](double v) {
    TrainConfig c = config;
    if (axis == SweepAxis::kInnerTau) {
      c.inner_tau = v;
    } else {
      if (!(v >= 0.0) || v != std::floor(v)) {
        throw std::invalid_argument(fmt::format("inner_steps sweep value {} is not a non-negative integer", v));
      }
      c.inner_steps = static_cast<std::size_t>(v);
    }
    c.Validate();
    return c;
  };

  std::optional<ModelParams> shared;
  std::vector<SweepRow> rows;
  for (double v : values) {
    const TrainConfig c = with_value(v);
    ModelParams params;
    if (axis == SweepAxis::kInnerSteps && !options.retrain_inner_steps) {
      if (!shared) shared = trainer(config);
      params = *shared;
    } else {
      params = trainer(c);
    }
    rows.push_back({v, Evaluate(params, dataset, options.eval_split, c, n_episodes, base_seed, options.eval)});
  }
  return rows;
}

std::string EvalSummaryCsv(const EvalResult& r) {
  return fmt::format("mean,ci95,n\n{:.17g},{:.17g},{}\n", r.mean_accuracy, r.ci95_halfwidth, r.n_episodes);
}

std::string EvalEpisodesCsv(const EvalResult& r) {
  std::string out = "episode,accuracy\n";
  for (std::size_t i = 0; i < r.episode_accuracies.size(); ++i) {
    out += fmt::format("{},{:.17g}\n", i, r.episode_accuracies[i]);
  }
  return out;
}

std::string HistogramCsv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_low,bin_high,count\n";
  for (const auto& b : bins) out += fmt::format("{:.17g},{:.17g},{}\n", b.low, b.high, b.count);
  return out;
}

std::string SweepCsv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = fmt::format("{},mean,ci95,n\n", SweepAxisName(axis));
  for (const auto& r : rows) {
    out += fmt::format("{:g},{:.17g},{:.17g},{}\n", r.value, r.result.mean_accuracy, r.result.ci95_halfwidth,
                       r.result.n_episodes);
  }
  return out;
}

}  // namespace metaalign
