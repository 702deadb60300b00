#pragma once

// Little-endian primitive encoding shared by the dataset container and the
// checkpoint format.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace metaalign::detail {

static_assert(std::endian::native == std::endian::little,
              "byte_io assumes a little-endian host");

class ByteWriter {
 public:
  void Raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U16(std::uint16_t v) { Raw(&v, sizeof v); }
  void U32(std::uint32_t v) { Raw(&v, sizeof v); }
  void U64(std::uint64_t v) { Raw(&v, sizeof v); }
  void F32(float v) { Raw(&v, sizeof v); }
  void F64(double v) { Raw(&v, sizeof v); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked cursor. `Fail` is a callable (message, offset) -> [[noreturn]]
/// supplied by the format so each one can raise its own error type.
template <typename Fail>
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, Fail fail) : bytes_(bytes), fail_(fail) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void Need(std::size_t n, std::string_view what) {
    if (remaining() < n) {
      fail_("truncated payload while reading " + std::string(what), pos_);
    }
  }
  void Raw(void* out, std::size_t n, std::string_view what) {
    Need(n, what);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T Read(std::string_view what) {
    T v;
    Raw(&v, sizeof v, what);
    return v;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  Fail fail_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace metaalign::detail
