#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

namespace metaalign::cli {

namespace {

std::string_view Trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(fmt::format("bad value for '{}': '{}'", key, text));
  }
  return value;
}

std::size_t ParseCount(std::string_view key, std::string_view text) { return ParseNumber<std::size_t>(key, text); }
double ParseReal(std::string_view key, std::string_view text) { return ParseNumber<double>(key, text); }

bool ParseBool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("bad value for '{}': '{}' (expected true|false)", key, text));
}

template <typename Fn>
auto Wrap(std::string_view key, Fn fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("bad value for '{}': {}", key, e.what()));
  }
}

std::string Real(double v) { return fmt::format("{}", v); }

struct Entry {
  std::string_view key;
  std::string_view doc;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define COUNT_ENTRY(KEY, FIELD, DOC)                                                                         \
  Entry {                                                                                                    \
    KEY, DOC, [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = ParseCount(k, v); },       \
        [](const RunConfig& c) { return fmt::format("{}", c.FIELD); }                                          \
  }
#define REAL_ENTRY(KEY, FIELD, DOC)                                                                          \
  Entry {                                                                                                    \
    KEY, DOC, [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = ParseReal(k, v); },        \
        [](const RunConfig& c) { return Real(c.FIELD); }                                                       \
  }
#define BOOL_ENTRY(KEY, FIELD, DOC)                                                                          \
  Entry {                                                                                                    \
    KEY, DOC, [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = ParseBool(k, v); },        \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                             \
  }
#define PATH_ENTRY(KEY, FIELD, DOC)                                                                          \
  Entry {                                                                                                    \
    KEY, DOC, [](RunConfig& c, std::string_view, std::string_view v) { c.FIELD = std::string(v); },           \
        [](const RunConfig& c) { return c.FIELD.string(); }                                                    \
  }

const std::vector<Entry>& Entries() {
  static const std::vector<Entry> entries = {
      PATH_ENTRY("dataset", dataset, "FSEB1 dataset path (written by gen-synth, read by the others)"),
      PATH_ENTRY("out", out_dir, "output directory"),
      PATH_ENTRY("checkpoint", checkpoint, "FSMP checkpoint path; empty means <out>/model.fsmp"),
      PATH_ENTRY("log_file", log_file, "training log CSV; empty means <out>/train_log.csv"),
      BOOL_ENTRY("resume", resume, "continue training from an existing checkpoint"),

      COUNT_ENTRY("classes_base", synth.classes_per_split[0], "synthetic base classes"),
      COUNT_ENTRY("classes_val", synth.classes_per_split[1], "synthetic val classes"),
      COUNT_ENTRY("classes_novel", synth.classes_per_split[2], "synthetic novel classes"),
      COUNT_ENTRY("d_v", synth.visual_dim, "synthetic visual feature dim"),
      COUNT_ENTRY("d_t", synth.text_dim, "synthetic textual embedding dim"),
      COUNT_ENTRY("samples_per_class", synth.samples_per_class, "synthetic visual features per class"),
      REAL_ENTRY("cluster_spread", synth.cluster_spread, "isotropic noise scale around class means"),
      REAL_ENTRY("class_separation", synth.class_separation, "radius of the sphere class means lie on"),
      Entry{"distortion", "text-side map: none|orthogonal_rotation|rotation_plus_scaling|random_linear",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.synth.distortion = Wrap(k, [&] { return ParseDistortion(v); });
            },
            [](const RunConfig& c) { return std::string(DistortionName(c.synth.distortion)); }},
      COUNT_ENTRY("synth_seed", synth.seed, "synthetic generator seed"),

      COUNT_ENTRY("n_way", train.n_way, "classes per episode"),
      COUNT_ENTRY("k_shot", train.k_shot, "support samples per class"),
      COUNT_ENTRY("m_query", train.m_query, "query samples per class"),
      REAL_ENTRY("inner_lr", train.inner_lr, "inner-loop SGD rate"),
      REAL_ENTRY("outer_lr", train.outer_lr, "outer-loop SGD rate"),
      COUNT_ENTRY("inner_steps", train.inner_steps, "inner-loop update steps"),
      REAL_ENTRY("inner_tau", train.inner_tau, "support-loss temperature"),
      REAL_ENTRY("outer_tau", train.outer_tau, "query-loss and prediction temperature"),
      Entry{"metric", "metric module kind: cosine|bilinear|mlp",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.train.metric_kind = Wrap(k, [&] { return ParseMetricKind(v); });
            },
            [](const RunConfig& c) { return std::string(MetricKindName(c.train.metric_kind)); }},
      Entry{"metric_init", "bilinear init: near_identity|gaussian",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              if (v == "near_identity") {
                c.train.metric_init = MetricInit::kNearIdentity;
              } else if (v == "gaussian") {
                c.train.metric_init = MetricInit::kGaussian;
              } else {
                throw ConfigError(fmt::format("bad value for '{}': '{}'", k, v));
              }
            },
            [](const RunConfig& c) {
              return std::string(c.train.metric_init == MetricInit::kNearIdentity ? "near_identity" : "gaussian");
            }},
      COUNT_ENTRY("mlp_hidden", train.mlp_hidden, "hidden width of the mlp metric"),
      COUNT_ENTRY("embed_dim", train.embed_dim, "shared embedding dim d; 0 means d_v"),
      Entry{"grad_order", "outer gradient: first|second",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.train.grad_order = Wrap(k, [&] { return ParseGradOrder(v); });
            },
            [](const RunConfig& c) { return std::string(GradOrderName(c.train.grad_order)); }},
      COUNT_ENTRY("meta_batch", train.meta_batch, "episodes averaged per outer step"),
      COUNT_ENTRY("epochs", train.epochs, "training epochs"),
      COUNT_ENTRY("episodes_per_epoch", train.episodes_per_epoch, "outer steps per epoch"),
      REAL_ENTRY("momentum", train.momentum, "outer SGD momentum"),
      REAL_ENTRY("weight_decay", train.weight_decay, "outer SGD weight decay"),
      COUNT_ENTRY("seed", train.seed, "training seed (init and episode stream)"),

      Entry{"train_split", "split used for meta-training",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.train_split = Wrap(k, [&] { return ParseSplit(v); });
            },
            [](const RunConfig& c) { return std::string(SplitName(c.train_split)); }},
      Entry{"eval_split", "split used for evaluation",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.eval_split = Wrap(k, [&] { return ParseSplit(v); });
            },
            [](const RunConfig& c) { return std::string(SplitName(c.eval_split)); }},
      COUNT_ENTRY("n_episodes", n_episodes, "evaluation episodes"),
      COUNT_ENTRY("eval_seed", eval_seed, "evaluation episode stream seed"),
      BOOL_ENTRY("histogram", histogram, "also write the true-class probability histogram"),
      COUNT_ENTRY("histogram_bins", histogram_bins, "histogram bins over [0, 1]"),

      Entry{"sweep_axis", "sweep axis: inner_tau|inner_steps",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.sweep_axis = Wrap(k, [&] { return ParseSweepAxis(v); });
            },
            [](const RunConfig& c) { return std::string(SweepAxisName(c.sweep_axis)); }},
      Entry{"sweep_values", "comma-separated sweep values",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              std::vector<double> values;
              while (!v.empty()) {
                const auto comma = v.find(',');
                values.push_back(ParseReal(k, Trim(v.substr(0, comma))));
                if (comma == std::string_view::npos) break;
                v.remove_prefix(comma + 1);
              }
              if (values.empty()) throw ConfigError(fmt::format("'{}' needs at least one value", k));
              c.sweep_values = std::move(values);
            },
            [](const RunConfig& c) {
              std::string s;
              for (std::size_t i = 0; i < c.sweep_values.size(); ++i) {
                s += (i ? "," : "") + Real(c.sweep_values[i]);
              }
              return s;
            }},
      BOOL_ENTRY("sweep_retrain", sweep_retrain, "retrain per value on the inner_steps axis"),
      COUNT_ENTRY("workers", workers, "evaluation worker threads"),
  };
  return entries;
}

#undef COUNT_ENTRY
#undef REAL_ENTRY
#undef BOOL_ENTRY
#undef PATH_ENTRY

}  // namespace

std::filesystem::path RunConfig::CheckpointPath() const {
  return checkpoint.empty() ? out_dir / "model.fsmp" : checkpoint;
}

std::filesystem::path RunConfig::LogPath() const { return log_file.empty() ? out_dir / "train_log.csv" : log_file; }

void RunConfig::Set(std::string_view key, std::string_view value) {
  for (const auto& e : Entries()) {
    if (e.key == key) {
      e.set(*this, key, value);
      return;
    }
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void RunConfig::ApplyText(std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
    }
    const auto key = Trim(line.substr(0, eq));
    const auto value = Trim(line.substr(eq + 1));
    if (!seen.emplace(key).second) {
      throw ConfigError(fmt::format("{}:{}: key '{}' assigned twice", origin, line_no, key));
    }
    try {
      Set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
    }
  }
}

void RunConfig::ApplyFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  ApplyText(ss.str(), path.string());
}

void RunConfig::ApplyAssignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(fmt::format("--set expects key=value, got '{}'", assignment));
  }
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

std::string RunConfig::Dump() const {
  std::string out;
  for (const auto& e : Entries()) out += fmt::format("{} = {}\n", e.key, e.get(*this));
  return out;
}

const std::vector<KeyDoc>& ConfigKeys() {
  static const std::vector<KeyDoc> docs = [] {
    const RunConfig defaults;
    std::vector<KeyDoc> out;
    for (const auto& e : Entries()) out.push_back({std::string(e.key), e.get(defaults), std::string(e.doc)});
    return out;
  }();
  return docs;
}

}  // namespace metaalign::cli
