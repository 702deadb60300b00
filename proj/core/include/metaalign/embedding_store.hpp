#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace metaalign {

enum class Split : std::uint8_t { kBase = 0, kVal = 1, kNovel = 2 };

std::string_view SplitName(Split split);
/// Parses "base", "val" or "novel". Throws std::invalid_argument otherwise.
Split ParseSplit(std::string_view name);

struct ClassRecord {
  std::string name;
  Split split = Split::kBase;
  std::optional<Eigen::VectorXd> textual_embedding;
  std::vector<Eigen::VectorXd> visual_features;
};

/// Class-partitioned visual features plus one optional textual embedding per
/// class. Values live in memory as f64 and are stored on disk as f32.
struct EmbeddingDataset {
  std::size_t visual_dim = 0;
  std::size_t text_dim = 0;
  std::vector<ClassRecord> classes;

  /// Indices of classes tagged with `split`, in dataset order.
  std::vector<std::size_t> ClassesInSplit(Split split) const;
  const ClassRecord* FindClass(std::string_view name) const;
};

bool operator==(const ClassRecord& a, const ClassRecord& b);
bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b);

/// Raised by LoadContainer. `offset()` is the byte position where decoding
/// failed.
class ContainerError : public std::runtime_error {
 public:
  ContainerError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

struct Violation {
  enum class Kind {
    kEmptyName,
    kDuplicateName,
    kVisualDimMismatch,
    kTextDimMismatch,
    kNonFiniteValue,
    kBadDatasetDims,
  };
  Kind kind;
  std::string class_name;
  std::string field;
  std::string message;
};

/// Lists every invariant violation. An empty result means the dataset is
/// well formed.
std::vector<Violation> Validate(const EmbeddingDataset& dataset);

// FSEB1 container. Little-endian throughout:
//   "FSEB" u8(version=1) u32(d_v) u32(d_t) u32(C)
//   C x { u16(name_len) name u8(split) u8(has_text) [d_t x f32] u32(n_c) }
//   C x { n_c x d_v x f32 }   row-contiguous, class order
inline constexpr char kContainerMagic[4] = {'F', 'S', 'E', 'B'};
inline constexpr std::uint8_t kContainerVersion = 1;

std::vector<std::uint8_t> EncodeContainer(const EmbeddingDataset& dataset);
EmbeddingDataset DecodeContainer(const std::vector<std::uint8_t>& bytes);

EmbeddingDataset LoadContainer(const std::filesystem::path& path);
/// Throws std::invalid_argument when `dataset` fails Validate, and
/// std::runtime_error on I/O failure.
void SaveContainer(const EmbeddingDataset& dataset, const std::filesystem::path& path);

}  // namespace metaalign
