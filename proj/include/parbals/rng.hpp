#pragma once

// Counter-based random streams.
//
// Every random quantity in the library is drawn from a stream keyed by a
// seed plus a tuple of integer/string tags, e.g. (seed, "gumbel", iteration,
// point_id). Draw i of a stream is a pure function of (key, i), so results do
// not depend on thread scheduling or on how many other streams were consumed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

namespace parbals {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline constexpr std::uint64_t mix_tag(std::uint64_t key, std::uint64_t tag) noexcept {
  return splitmix64(key ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

template <typename T>
constexpr std::uint64_t tag_value(const T& t) noexcept {
  if constexpr (std::is_convertible_v<const T&, std::string_view>) {
    return fnv1a(std::string_view(t));
  } else {
    static_assert(std::is_integral_v<T> || std::is_enum_v<T>, "stream tags are integers or strings");
    return static_cast<std::uint64_t>(t);
  }
}

}  // namespace detail

class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

  template <typename... Tags>
  static constexpr Stream make(std::uint64_t seed, const Tags&... tags) noexcept {
    std::uint64_t key = splitmix64(seed);
    ((key = detail::mix_tag(key, detail::tag_value(tags))), ...);
    return Stream(key);
  }

  template <typename... Tags>
  constexpr Stream child(const Tags&... tags) const noexcept {
    std::uint64_t key = key_;
    ((key = detail::mix_tag(key, detail::tag_value(tags))), ...);
    return Stream(key);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64() noexcept {
    return splitmix64(key_ ^ splitmix64(counter_++ * 0xd1b54a32d192ed03ULL + 1));
  }

  // Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::size_t index(std::size_t n) noexcept {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Box-Muller; both variates of a pair are used.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double gumbel() noexcept { return -std::log(-std::log(uniform())); }

  // Inverse-CDF draw; the last category with positive mass absorbs rounding.
  int categorical(std::span<const double> probs) noexcept {
    const double u = uniform();
    double acc = 0.0;
    int last = 0;
    for (std::size_t y = 0; y < probs.size(); ++y) {
      if (probs[y] <= 0.0) continue;
      acc += probs[y];
      last = static_cast<int>(y);
      if (u < acc) return last;
    }
    return last;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<std::size_t> permutation(std::size_t n, Stream stream) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[stream.index(i)]);
  }
  return p;
}

// First `count` entries of a seeded permutation of [0, n).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Stream stream) {
  auto p = permutation(n, stream);
  p.resize(count < n ? count : n);
  return p;
}

}  // namespace parbals
