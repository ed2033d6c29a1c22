#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace loadest {

// FNV-1a over a canonical byte stream; used to fingerprint fitted artifacts.
class Digest {
 public:
  Digest& add(std::string_view s) {
    add_u64(s.size());
    for (unsigned char c : s) mix(c);
    return *this;
  }
  Digest& add(const char* s) { return add(std::string_view(s)); }
  Digest& add(double v) { return add_u64(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); }
  Digest& add(std::int64_t v) { return add_u64(static_cast<std::uint64_t>(v)); }
  Digest& add(int v) { return add_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  Digest& add(bool v) { return add_u64(v ? 1 : 0); }
  Digest& add_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(v >> (8 * i)));
    return *this;
  }
  Digest& add(std::span<const double> xs) {
    add_u64(xs.size());
    for (double x : xs) add(x);
    return *this;
  }

  std::uint64_t value() const noexcept { return h_; }
  std::string hex() const;

 private:
  void mix(unsigned char c) noexcept {
    h_ ^= c;
    h_ *= 0x100000001b3ULL;
  }
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string Digest::hex() const {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = digits[(h_ >> (4 * i)) & 0xf];
  return out;
}

}  // namespace loadest
