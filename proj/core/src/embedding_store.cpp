#include "metaalign/embedding_store.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "byte_io.hpp"

namespace metaalign {

namespace detail {

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open '{}' for reading", path.string()));
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error(fmt::format("write to '{}' failed", path.string()));
  }
}

}  // namespace detail

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kBase:
      return "base";
    case Split::kVal:
      return "val";
    case Split::kNovel:
      return "novel";
  }
  return "unknown";
}

Split ParseSplit(std::string_view name) {
  if (name == "base") return Split::kBase;
  if (name == "val") return Split::kVal;
  if (name == "novel") return Split::kNovel;
  throw std::invalid_argument(fmt::format("unknown split '{}'", name));
}

std::vector<std::size_t> EmbeddingDataset::ClassesInSplit(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].split == split) out.push_back(i);
  }
  return out;
}

const ClassRecord* EmbeddingDataset::FindClass(std::string_view name) const {
  for (const auto& c : classes) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

namespace {

// Exact comparison, including dimensions; Eigen's operator== asserts on size.
bool SameVector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool AllFinite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

bool operator==(const ClassRecord& a, const ClassRecord& b) {
  if (a.name != b.name || a.split != b.split) return false;
  if (a.textual_embedding.has_value() != b.textual_embedding.has_value()) return false;
  if (a.textual_embedding && !SameVector(*a.textual_embedding, *b.textual_embedding)) return false;
  if (a.visual_features.size() != b.visual_features.size()) return false;
  for (std::size_t i = 0; i < a.visual_features.size(); ++i) {
    if (!SameVector(a.visual_features[i], b.visual_features[i])) return false;
  }
  return true;
}

bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  return a.visual_dim == b.visual_dim && a.text_dim == b.text_dim && a.classes == b.classes;
}

ContainerError::ContainerError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(fmt::format("{} (at byte offset {})", what, offset)), offset_(offset) {}

std::vector<Violation> Validate(const EmbeddingDataset& dataset) {
  std::vector<Violation> out;
  if (dataset.visual_dim == 0 || dataset.text_dim == 0) {
    out.push_back({Violation::Kind::kBadDatasetDims, "", "dims",
                   fmt::format("dimensions must be positive (d_v={}, d_t={})", dataset.visual_dim,
                               dataset.text_dim)});
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : dataset.classes) {
    if (c.name.empty()) {
      out.push_back({Violation::Kind::kEmptyName, c.name, "name", "class name is empty"});
    } else if (!seen.insert(c.name).second) {
      out.push_back({Violation::Kind::kDuplicateName, c.name, "name",
                     fmt::format("duplicate class name '{}'", c.name)});
    }
    if (c.textual_embedding) {
      const auto size = static_cast<std::size_t>(c.textual_embedding->size());
      if (size != dataset.text_dim) {
        out.push_back({Violation::Kind::kTextDimMismatch, c.name, "textual_embedding",
                       fmt::format("textual embedding has dim {}, expected {}", size, dataset.text_dim)});
      } else if (!AllFinite(*c.textual_embedding)) {
        out.push_back({Violation::Kind::kNonFiniteValue, c.name, "textual_embedding",
                       "textual embedding contains a non-finite value"});
      }
    }
    for (std::size_t i = 0; i < c.visual_features.size(); ++i) {
      const auto size = static_cast<std::size_t>(c.visual_features[i].size());
      if (size != dataset.visual_dim) {
        out.push_back({Violation::Kind::kVisualDimMismatch, c.name,
                       fmt::format("visual_features[{}]", i),
                       fmt::format("visual feature has dim {}, expected {}", size, dataset.visual_dim)});
      } else if (!AllFinite(c.visual_features[i])) {
        out.push_back({Violation::Kind::kNonFiniteValue, c.name, fmt::format("visual_features[{}]", i),
                       "visual feature contains a non-finite value"});
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> EncodeContainer(const EmbeddingDataset& dataset) {
  const auto violations = Validate(dataset);
  if (!violations.empty()) {
    throw std::invalid_argument(fmt::format("cannot encode invalid dataset: class '{}' field {}: {}",
                                            violations.front().class_name, violations.front().field,
                                            violations.front().message));
  }
  constexpr auto kU32Max = std::numeric_limits<std::uint32_t>::max();
  if (dataset.visual_dim > kU32Max || dataset.text_dim > kU32Max || dataset.classes.size() > kU32Max) {
    throw std::invalid_argument("dataset too large for FSEB1 (u32 field overflow)");
  }

  detail::ByteWriter w;
  w.Raw(kContainerMagic, 4);
  w.U8(kContainerVersion);
  w.U32(static_cast<std::uint32_t>(dataset.visual_dim));
  w.U32(static_cast<std::uint32_t>(dataset.text_dim));
  w.U32(static_cast<std::uint32_t>(dataset.classes.size()));
  for (const auto& c : dataset.classes) {
    if (c.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument(fmt::format("class name longer than 65535 bytes: '{}...'", c.name.substr(0, 32)));
    }
    if (c.visual_features.size() > kU32Max) {
      throw std::invalid_argument(fmt::format("class '{}' has too many features", c.name));
    }
    w.U16(static_cast<std::uint16_t>(c.name.size()));
    w.Raw(c.name.data(), c.name.size());
    w.U8(static_cast<std::uint8_t>(c.split));
    w.U8(c.textual_embedding ? 1 : 0);
    if (c.textual_embedding) {
      for (double v : *c.textual_embedding) w.F32(static_cast<float>(v));
    }
    w.U32(static_cast<std::uint32_t>(c.visual_features.size()));
  }
  for (const auto& c : dataset.classes) {
    for (const auto& f : c.visual_features) {
      for (double v : f) w.F32(static_cast<float>(v));
    }
  }
  return std::move(w.bytes());
}

EmbeddingDataset DecodeContainer(const std::vector<std::uint8_t>& bytes) {
  auto fail = [](const std::string& msg, std::uint64_t offset) -> void { throw ContainerError(msg, offset); };
  detail::ByteReader reader(bytes, fail);

  char magic[4];
  reader.Raw(magic, 4, "magic");
  if (std::memcmp(magic, kContainerMagic, 4) != 0) {
    throw ContainerError("bad magic: expected \"FSEB\"", 0);
  }
  const auto version_offset = reader.offset();
  const auto version = reader.Read<std::uint8_t>("version");
  if (version != kContainerVersion) {
    throw ContainerError(fmt::format("unsupported version {}", version), version_offset);
  }

  EmbeddingDataset ds;
  const auto dims_offset = reader.offset();
  ds.visual_dim = reader.Read<std::uint32_t>("d_v");
  ds.text_dim = reader.Read<std::uint32_t>("d_t");
  if (ds.visual_dim == 0 || ds.text_dim == 0) {
    throw ContainerError(fmt::format("dimension mismatch: header declares d_v={}, d_t={}; both must be positive",
                                     ds.visual_dim, ds.text_dim),
                         dims_offset);
  }
  const auto class_count = reader.Read<std::uint32_t>("class count");

  std::vector<std::uint32_t> feature_counts;
  std::unordered_map<std::string, std::size_t> names;
  for (std::uint32_t ci = 0; ci < class_count; ++ci) {
    const auto record_offset = reader.offset();
    ClassRecord rec;
    const auto name_len = reader.Read<std::uint16_t>("class name length");
    rec.name.resize(name_len);
    reader.Raw(rec.name.data(), name_len, "class name");
    if (rec.name.empty()) {
      throw ContainerError(fmt::format("class {} has an empty name", ci), record_offset);
    }
    if (!names.emplace(rec.name, ci).second) {
      throw ContainerError(fmt::format("duplicate class name '{}'", rec.name), record_offset);
    }
    const auto split_offset = reader.offset();
    const auto split = reader.Read<std::uint8_t>("split");
    if (split > 2) {
      throw ContainerError(fmt::format("class '{}' has invalid split tag {}", rec.name, split), split_offset);
    }
    rec.split = static_cast<Split>(split);
    const auto has_text_offset = reader.offset();
    const auto has_text = reader.Read<std::uint8_t>("has_text");
    if (has_text > 1) {
      throw ContainerError(fmt::format("class '{}' has invalid has_text flag {}", rec.name, has_text),
                           has_text_offset);
    }
    if (has_text == 1) {
      reader.Need(ds.text_dim * sizeof(float), "textual embedding");
      Eigen::VectorXd t(static_cast<Eigen::Index>(ds.text_dim));
      for (std::size_t k = 0; k < ds.text_dim; ++k) t[static_cast<Eigen::Index>(k)] = reader.Read<float>("f32");
      rec.textual_embedding = std::move(t);
    }
    feature_counts.push_back(reader.Read<std::uint32_t>("feature count"));
    ds.classes.push_back(std::move(rec));
  }

  const std::uint64_t row_bytes = static_cast<std::uint64_t>(ds.visual_dim) * sizeof(float);
  std::uint64_t expected = 0;
  for (auto n : feature_counts) expected += n * row_bytes;
  if (reader.remaining() < expected) {
    throw ContainerError(fmt::format("truncated payload: records declare {} feature bytes, {} present", expected,
                                     reader.remaining()),
                         reader.offset());
  }
  if (reader.remaining() > expected) {
    throw ContainerError(fmt::format("dimension mismatch between header and records: {} trailing bytes after "
                                     "declared features",
                                     reader.remaining() - expected),
                         reader.offset() + expected);
  }

  for (std::size_t ci = 0; ci < ds.classes.size(); ++ci) {
    auto& feats = ds.classes[ci].visual_features;
    feats.reserve(feature_counts[ci]);
    for (std::uint32_t i = 0; i < feature_counts[ci]; ++i) {
      Eigen::VectorXd f(static_cast<Eigen::Index>(ds.visual_dim));
      for (std::size_t k = 0; k < ds.visual_dim; ++k) f[static_cast<Eigen::Index>(k)] = reader.Read<float>("f32");
      feats.push_back(std::move(f));
    }
  }

  const auto violations = Validate(ds);
  if (!violations.empty()) {
    throw ContainerError(fmt::format("class '{}' field {}: {}", violations.front().class_name,
                                     violations.front().field, violations.front().message),
                         reader.offset());
  }
  return ds;
}

EmbeddingDataset LoadContainer(const std::filesystem::path& path) {
  return DecodeContainer(detail::ReadFileBytes(path));
}

void SaveContainer(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
  detail::WriteFileBytes(path, EncodeContainer(dataset));
}

}  // namespace metaalign
