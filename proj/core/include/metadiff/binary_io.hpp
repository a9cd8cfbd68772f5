#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metadiff {

/// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones).
std::uint64_t crc64(std::span<const std::byte> bytes);

/// Little-endian append-only byte buffer.
class ByteWriter {
 public:
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_bytes(std::span<const std::byte> bytes);
  void put_text(std::string_view s);  // raw bytes, no length prefix
  /// CRC-64 of everything written since byte offset `from`.
  void put_crc_since(std::size_t from);

  std::size_t size() const noexcept { return buf_.size(); }
  const std::vector<std::byte>& bytes() const noexcept { return buf_; }

 private:
  std::vector<std::byte> buf_;
};

/// Bounds-checked little-endian reader. Overruns throw CorruptContainer.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint32_t get_u32();
  std::uint64_t get_u64();
  float get_f32();
  std::string get_text(std::size_t n);
  /// Reads a u64 CRC and compares it with the CRC of bytes [from, here).
  /// Throws CorruptContainer naming `what` on mismatch.
  void expect_crc_since(std::size_t from, const std::string& what);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::byte> take(std::size_t n);

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

/// Whole-file helpers; failures throw IoError.
std::vector<std::byte> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::byte> bytes);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace metadiff
