#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>
#include <type_traits>

namespace lsdcalib {

/// Incremental 64-bit FNV-1a.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a64& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= kPrime;
    }
    return *this;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  Fnv1a64& value(T v) {
    return bytes(&v, sizeof(v));
  }

  Fnv1a64& str(std::string_view s) {
    value(static_cast<std::uint64_t>(s.size()));
    return bytes(s.data(), s.size());
  }

  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = kOffset;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  return Fnv1a64().bytes(s.data(), s.size()).digest();
}

/// SplitMix64 finalizer; decorrelates nearby integer seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace lsdcalib
