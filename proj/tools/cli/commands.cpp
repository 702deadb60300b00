#include "commands.hpp"

#include <filesystem>
#include <fstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "metaalign/checkpoint.hpp"
#include "metaalign/embedding_store.hpp"
#include "metaalign/eval_harness.hpp"
#include "metaalign/maml.hpp"
#include "metaalign/synth_gen.hpp"

namespace metaalign::cli {

namespace {

void WriteText(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  f << text;
  if (!f) throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
}

EvalOptions EvalOpts(const RunConfig& c) {
  EvalOptions o;
  o.workers = c.workers;
  o.collect_probs = true;
  return o;
}

void PrintSplitSummary(const EmbeddingDataset& ds, std::ostream& out) {
  fmt::print(out, "dataset: d_v={} d_t={} classes={} (base={} val={} novel={})\n", ds.visual_dim, ds.text_dim,
             ds.classes.size(), ds.ClassesInSplit(Split::kBase).size(), ds.ClassesInSplit(Split::kVal).size(),
             ds.ClassesInSplit(Split::kNovel).size());
}

EmbeddingDataset LoadDataset(const RunConfig& c) {
  if (!std::filesystem::is_regular_file(c.dataset)) {
    throw ContainerError(fmt::format("no dataset file at '{}'", c.dataset.string()), 0);
  }
  return LoadContainer(c.dataset);
}

TrainState LoadState(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw CheckpointError(fmt::format("no checkpoint file at '{}'", path.string()));
  }
  return LoadCheckpoint(path);
}

ModelParams LoadParams(const RunConfig& c) { return LoadState(c.CheckpointPath()).params; }

// The checkpoint fixes the metric; evaluation must adapt the same kind.
TrainConfig EvalConfigFor(const RunConfig& c, const ModelParams& params) {
  TrainConfig t = c.train;
  t.metric_kind = params.metric.kind;
  t.Validate();
  return t;
}

}  // namespace

int CmdGenSynth(const RunConfig& c, std::ostream& out) {
  const auto ds = Generate(c.synth);
  if (c.dataset.has_parent_path()) std::filesystem::create_directories(c.dataset.parent_path());
  SaveContainer(ds, c.dataset);
  fmt::print(out, "wrote {} ({} distortion, seed {})\n", c.dataset.string(), DistortionName(c.synth.distortion),
             c.synth.seed);
  PrintSplitSummary(ds, out);
  return 0;
}

int CmdTrain(const RunConfig& c, std::ostream& out) {
  const auto ds = LoadDataset(c);
  c.train.Validate();
  std::optional<TrainState> resume;
  std::string log_text;
  if (c.resume && std::filesystem::exists(c.CheckpointPath())) {
    resume = LoadState(c.CheckpointPath());
    if (std::filesystem::exists(c.LogPath())) {
      std::ifstream in(c.LogPath(), std::ios::binary);
      log_text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    fmt::print(out, "resuming from {} at step {}\n", c.CheckpointPath().string(), resume->completed_steps);
  }
  if (log_text.empty()) log_text = std::string(CsvHeaderTrainLog()) + "\n";

  const auto result = MetaTrain(ds, c.train, {}, std::move(resume), c.train_split);
  for (const auto& r : result.log) log_text += FormatTrainLogRow(r) + "\n";

  std::filesystem::create_directories(c.out_dir);
  const auto ckpt = c.CheckpointPath();
  if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
  SaveCheckpoint(result.state, ckpt);
  WriteText(c.LogPath(), log_text);

  double lq = 0.0, acc = 0.0;
  const std::size_t tail = std::min<std::size_t>(result.log.size(), 50);
  for (std::size_t i = result.log.size() - tail; i < result.log.size(); ++i) {
    lq += result.log[i].query_loss;
    acc += result.log[i].query_accuracy;
  }
  fmt::print(out, "trained {} outer steps ({}-order, metric {})\n", result.state.completed_steps,
             GradOrderName(c.train.grad_order), MetricKindName(c.train.metric_kind));
  if (tail > 0) {
    fmt::print(out, "last {} steps: L_Q={:.4f} query_acc={:.4f}\n", tail, lq / static_cast<double>(tail),
               acc / static_cast<double>(tail));
  }
  fmt::print(out, "wrote {} and {}\n", ckpt.string(), c.LogPath().string());
  return 0;
}

int CmdEval(const RunConfig& c, std::ostream& out) {
  const auto ds = LoadDataset(c);
  const auto params = LoadParams(c);
  const auto config = EvalConfigFor(c, params);
  const auto result = Evaluate(params, ds, c.eval_split, config, c.n_episodes, c.eval_seed, EvalOpts(c));

  std::filesystem::create_directories(c.out_dir);
  WriteText(c.out_dir / "eval.csv", EvalSummaryCsv(result));
  WriteText(c.out_dir / "eval_episodes.csv", EvalEpisodesCsv(result));
  if (c.histogram) WriteText(c.out_dir / "histogram.csv", HistogramCsv(ProbabilityHistogram(result, c.histogram_bins)));
  fmt::print(out, "accuracy {:.2f} +- {:.2f} % over {} episodes ({}-way {}-shot, split {})\n",
             100.0 * result.mean_accuracy, 100.0 * result.ci95_halfwidth, result.n_episodes, config.n_way,
             config.k_shot, SplitName(c.eval_split));
  fmt::print(out, "mean true-class probability {:.4f}\n", result.MeanTrueProb());
  return 0;
}

int CmdAblate(const RunConfig& c, std::ostream& out) {
  const auto ds = LoadDataset(c);
  const auto params = LoadParams(c);
  const auto config = EvalConfigFor(c, params);
  const auto direct = DirectAlignmentEval(ds, c.eval_split, config, c.n_episodes, c.eval_seed, EvalOpts(c));
  const auto adapted = Evaluate(params, ds, c.eval_split, config, c.n_episodes, c.eval_seed, EvalOpts(c));

  std::string paired = "episode,direct_accuracy,adapted_accuracy\n";
  for (std::size_t i = 0; i < direct.n_episodes; ++i) {
    paired += fmt::format("{},{:.17g},{:.17g}\n", i, direct.episode_accuracies[i], adapted.episode_accuracies[i]);
  }
  std::string summary = "model,mean,ci95,n,mean_true_prob\n";
  summary += fmt::format("direct_alignment,{:.17g},{:.17g},{},{:.17g}\n", direct.mean_accuracy,
                         direct.ci95_halfwidth, direct.n_episodes, direct.MeanTrueProb());
  summary += fmt::format("adapted_{},{:.17g},{:.17g},{},{:.17g}\n", MetricKindName(params.metric.kind),
                         adapted.mean_accuracy, adapted.ci95_halfwidth, adapted.n_episodes, adapted.MeanTrueProb());

  std::filesystem::create_directories(c.out_dir);
  WriteText(c.out_dir / "ablate_paired.csv", paired);
  WriteText(c.out_dir / "ablate_summary.csv", summary);
  WriteText(c.out_dir / "histogram_direct.csv", HistogramCsv(ProbabilityHistogram(direct, c.histogram_bins)));
  WriteText(c.out_dir / "histogram_adapted.csv", HistogramCsv(ProbabilityHistogram(adapted, c.histogram_bins)));

  fmt::print(out, "direct alignment: {:.2f} +- {:.2f} %  mean true prob {:.4f}\n", 100.0 * direct.mean_accuracy,
             100.0 * direct.ci95_halfwidth, direct.MeanTrueProb());
  fmt::print(out, "adapted {}: {:.2f} +- {:.2f} %  mean true prob {:.4f}\n", MetricKindName(params.metric.kind),
             100.0 * adapted.mean_accuracy, 100.0 * adapted.ci95_halfwidth, adapted.MeanTrueProb());
  return 0;
}

int CmdSweep(const RunConfig& c, std::ostream& out) {
  const auto ds = LoadDataset(c);
  c.train.Validate();
  SweepOptions opts;
  opts.retrain_inner_steps = c.sweep_retrain;
  opts.train_split = c.train_split;
  opts.eval_split = c.eval_split;
  opts.eval = EvalOpts(c);
  opts.eval.collect_probs = false;
  const auto rows = Sweep(ds, c.train, c.sweep_axis, c.sweep_values, c.n_episodes, c.eval_seed, opts);

  const auto path = c.out_dir / fmt::format("sweep_{}.csv", SweepAxisName(c.sweep_axis));
  std::filesystem::create_directories(c.out_dir);
  WriteText(path, SweepCsv(c.sweep_axis, rows));
  fmt::print(out, "{:>12} | accuracy (%)\n", SweepAxisName(c.sweep_axis));
  for (const auto& r : rows) {
    fmt::print(out, "{:>12g} | {:.2f} +- {:.2f}\n", r.value, 100.0 * r.result.mean_accuracy,
               100.0 * r.result.ci95_halfwidth);
  }
  fmt::print(out, "wrote {}\n", path.string());
  return 0;
}

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot cross-modal alignment with a meta-learned metric module", "metaalign"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
  std::optional<std::string> out_dir;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--set", sets, "override one key (key=value); repeatable")->take_all();
  app.add_option("--workers", workers, "evaluation worker threads");
  app.add_option("--out", out_dir, "output directory");

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic FSEB1 dataset");
  auto* train = app.add_subcommand("train", "meta-train and write a checkpoint and training log");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with 95% confidence intervals");
  auto* ablate = app.add_subcommand("ablate", "direct alignment vs the adapted model on the same episodes");
  auto* sweep = app.add_subcommand("sweep", "inner temperature or inner step sweep");
  auto* keys = app.add_subcommand("config-keys", "list config keys with defaults");
  std::optional<std::string> axis;
  std::optional<std::string> values;
  sweep->add_option("--axis", axis, "inner_tau | inner_steps");
  sweep->add_option("--values", values, "comma-separated values");

  try {
    // CLI11 consumes the argument vector from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: usage: {}\n", e.what());
    return 2;
  }

  std::string_view kind = "config";
  try {
    RunConfig config;
    if (!config_path.empty()) config.ApplyFile(config_path);
    for (const auto& s : sets) config.ApplyAssignment(s);
    if (workers) config.workers = *workers;
    if (out_dir) config.out_dir = *out_dir;
    if (axis) config.Set("sweep_axis", *axis);
    if (values) config.Set("sweep_values", *values);
    if (config.workers == 0) throw ConfigError("workers must be >= 1");

    kind = "run";
    if (keys->parsed()) {
      for (const auto& k : ConfigKeys()) fmt::print(out, "{} = {}    # {}\n", k.key, k.default_value, k.doc);
      return 0;
    }
    if (gen->parsed()) return CmdGenSynth(config, out);
    if (train->parsed()) return CmdTrain(config, out);
    if (eval->parsed()) return CmdEval(config, out);
    if (ablate->parsed()) return CmdAblate(config, out);
    if (sweep->parsed()) return CmdSweep(config, out);
  } catch (const ConfigError& e) {
    fmt::print(err, "error: config: {}\n", e.what());
    return 2;
  } catch (const ContainerError& e) {
    fmt::print(err, "error: dataset: {}\n", e.what());
    return 3;
  } catch (const CheckpointError& e) {
    fmt::print(err, "error: checkpoint: {}\n", e.what());
    return 3;
  } catch (const SamplerError& e) {
    fmt::print(err, "error: sampler: {}\n", e.what());
    return 4;
  } catch (const DivergenceError& e) {
    fmt::print(err, "error: divergence: {}\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}: {}\n", kind, e.what());
    return 1;
  }
  fmt::print(err, "error: usage: no command given\n");
  return 2;
}

}  // namespace metaalign::cli
