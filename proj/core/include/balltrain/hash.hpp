#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>

namespace balltrain {

// 64-bit FNV-1a, streaming. Used for augmented-set content hashes,
// checkpoint tags and config digests.
class Hasher {
 public:
  void update(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void update_value(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(v));
  }
  void update_str(const std::string& s) { update(s.data(), s.size()); }

  std::uint64_t digest() const { return h_; }

  std::string hex() const {
    static const char* d = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = h_;
    for (int i = 15; i >= 0; --i) {
      out[i] = d[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_bytes(const void* p, std::size_t n) {
  Hasher h;
  h.update(p, n);
  return h.digest();
}

}  // namespace balltrain
