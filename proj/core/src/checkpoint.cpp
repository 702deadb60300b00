#include "metaalign/checkpoint.hpp"

#include <cstring>

#include <fmt/format.h>

#include "byte_io.hpp"

namespace metaalign {

std::vector<std::uint8_t> EncodeCheckpoint(const TrainState& state) {
  const auto& p = state.params;
  p.CheckInvariants();
  detail::ByteWriter w;
  w.Raw(kCheckpointMagic, 4);
  w.U8(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(p.heads.dim()));
  w.U32(static_cast<std::uint32_t>(p.heads.visual.cols()));
  w.U32(static_cast<std::uint32_t>(p.heads.text.cols()));
  w.U8(static_cast<std::uint8_t>(p.metric.kind));
  w.U32(static_cast<std::uint32_t>(p.metric.hidden));
  w.U64(state.completed_steps);
  const bool has_velocity = state.velocity.size() == p.size();
  w.U8(has_velocity ? 1 : 0);
  for (double v : p.Flatten()) w.F64(v);
  if (has_velocity) {
    for (double v : state.velocity) w.F64(v);
  }
  return std::move(w.bytes());
}

TrainState DecodeCheckpoint(const std::vector<std::uint8_t>& bytes) {
  auto fail = [](const std::string& msg, std::uint64_t offset) -> void {
    throw CheckpointError(fmt::format("{} (at byte offset {})", msg, offset));
  };
  detail::ByteReader r(bytes, fail);
  char magic[4];
  r.Raw(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) fail("bad magic: expected \"FSMP\"", 0);
  const auto version = r.Read<std::uint8_t>("version");
  if (version != kCheckpointVersion) fail(fmt::format("unsupported checkpoint version {}", version), 4);

  const auto d = static_cast<Eigen::Index>(r.Read<std::uint32_t>("d"));
  const auto dv = static_cast<Eigen::Index>(r.Read<std::uint32_t>("d_v"));
  const auto dt = static_cast<Eigen::Index>(r.Read<std::uint32_t>("d_t"));
  const auto kind_offset = r.offset();
  const auto kind = r.Read<std::uint8_t>("metric kind");
  if (kind > 2) fail(fmt::format("invalid metric kind {}", kind), kind_offset);
  const auto hidden = static_cast<Eigen::Index>(r.Read<std::uint32_t>("mlp hidden"));
  if (d == 0 || dv == 0 || dt == 0) fail("zero dimension in checkpoint header", 5);

  TrainState state;
  state.completed_steps = r.Read<std::uint64_t>("completed steps");
  const auto has_velocity = r.Read<std::uint8_t>("has_velocity");
  if (has_velocity > 1) fail("invalid has_velocity flag", r.offset() - 1);

  state.params.heads.visual = Eigen::MatrixXd::Zero(d, dv);
  state.params.heads.text = Eigen::MatrixXd::Zero(d, dt);
  try {
    state.params.metric = MetricParams::Zeros(static_cast<MetricKind>(kind), d, hidden);
  } catch (const DimensionError& e) {
    fail(e.what(), kind_offset);
  }
  const auto n = state.params.size();
  const auto expected = static_cast<std::size_t>(n) * sizeof(double) * (has_velocity ? 2 : 1);
  if (r.remaining() != expected) {
    fail(fmt::format("payload holds {} bytes, header implies {}", r.remaining(), expected), r.offset());
  }
  Eigen::VectorXd flat(n);
  for (Eigen::Index i = 0; i < n; ++i) flat[i] = r.Read<double>("f64");
  state.params.Unflatten(flat);
  if (has_velocity) {
    state.velocity.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) state.velocity[i] = r.Read<double>("f64");
  } else {
    state.velocity = Eigen::VectorXd::Zero(n);
  }
  return state;
}

void SaveCheckpoint(const TrainState& state, const std::filesystem::path& path) {
  detail::WriteFileBytes(path, EncodeCheckpoint(state));
}

TrainState LoadCheckpoint(const std::filesystem::path& path) { return DecodeCheckpoint(detail::ReadFileBytes(path)); }

}  // namespace metaalign
