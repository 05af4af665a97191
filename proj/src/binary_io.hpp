#pragma once

// Little-endian byte packing shared by the dialogue and checkpoint formats.

#include "hbaf/errors.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace hbaf::io {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
}

class Reader {
 public:
  Reader(std::string bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void expect(std::string_view magic) {
    if (get_bytes(magic.size()) != magic) throw DataError(source_ + ": bad magic");
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }
  const std::string& bytes() const { return bytes_; }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw DataError(source_ + ": truncated file");
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_bytes(const std::filesystem::path& file);
void write_bytes(const std::filesystem::path& file, const std::string& bytes);

inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hbaf::io
