#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metaalign/embedding_store.hpp"
#include "metaalign/eval_harness.hpp"
#include "metaalign/maml.hpp"
#include "metaalign/synth_gen.hpp"

namespace metaalign::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command can be told, as one flat key = value namespace.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;

  std::filesystem::path dataset = "dataset.fseb";
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  // empty: <out>/model.fsmp
  std::filesystem::path log_file;    // empty: <out>/train_log.csv
  bool resume = false;

  Split train_split = Split::kBase;
  Split eval_split = Split::kNovel;
  std::size_t n_episodes = 1000;
  std::uint64_t eval_seed = 1;
  bool histogram = false;
  std::size_t histogram_bins = 20;

  SweepAxis sweep_axis = SweepAxis::kInnerTau;
  std::vector<double> sweep_values = {1, 0.7, 0.5, 0.3, 0.2, 0.1};
  bool sweep_retrain = false;

  std::size_t workers = 1;

  std::filesystem::path CheckpointPath() const;
  std::filesystem::path LogPath() const;

  /// Applies one assignment. Unknown keys and malformed values throw
  /// ConfigError.
  void Set(std::string_view key, std::string_view value);
  /// Parses "key = value" lines; '#' starts a comment. `origin` prefixes
  /// error messages.
  void ApplyText(std::string_view text, std::string_view origin = "<config>");
  void ApplyFile(const std::filesystem::path& path);
  /// Parses "key=value" from a --set flag.
  void ApplyAssignment(std::string_view assignment);

  /// Current values in the flat text format; re-applying it reproduces
  /// this config.
  std::string Dump() const;
};

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Every accepted key with its default and a one-line description.
const std::vector<KeyDoc>& ConfigKeys();

}  // namespace metaalign::cli
