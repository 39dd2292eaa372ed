#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace inversor {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Bad user-supplied configuration (missing provider, invalid parameter).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A backend call failed. Retryable failures (network, 5xx) are distinct from
/// a legitimate -inf score, which is a value, never an exception.
class BackendError : public std::runtime_error {
public:
  BackendError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

private:
  bool retryable_;
};

/// The backend does not implement the requested capability.
class CapabilityError : public std::runtime_error {
public:
  explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed wire payload.
class ProtocolError : public std::runtime_error {
public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller violated a documented precondition.
class ContractError : public std::logic_error {
public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// ---------------------------------------------------------------------------
// Seed derivation and hashing
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for (stream a, stream b) under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(a)) ^ splitmix64(~b));
}

struct Hash128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;
  bool operator==(const Hash128& o) const { return hi == o.hi && lo == o.lo; }
  std::string hex() const {
    static const char* d = "0123456789abcdef";
    std::string s(32, '0');
    std::uint64_t h = hi, l = lo;
    for (int i = 15; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] = d[h & 0xf];
      s[static_cast<std::size_t>(16 + i)] = d[l & 0xf];
      h >>= 4;
      l >>= 4;
    }
    return s;
  }
};

struct Hash128Hasher {
  std::size_t operator()(const Hash128& h) const {
    return static_cast<std::size_t>(h.hi ^ (h.lo * 0x9e3779b97f4a7c15ULL));
  }
};

/// Incremental 128-bit content hash (two decorrelated FNV/splitmix streams).
class HashBuilder {
public:
  HashBuilder() = default;

  HashBuilder& add(std::uint64_t v) {
    hi_ = splitmix64(hi_ ^ v);
    lo_ = splitmix64(lo_ + 0x632be59bd9b4e019ULL + v);
    return *this;
  }
  HashBuilder& add(std::int64_t v) { return add(static_cast<std::uint64_t>(v)); }
  HashBuilder& add(int v) { return add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  HashBuilder& add(double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    return add(bits);
  }
  HashBuilder& add(std::string_view s) {
    add(static_cast<std::uint64_t>(s.size()));
    std::uint64_t acc = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      acc = (acc ^ c) * 0x100000001b3ULL;
    }
    return add(acc);
  }
  HashBuilder& add(const TokenSequence& t) {
    add(static_cast<std::uint64_t>(t.size()));
    for (TokenId id : t) add(static_cast<std::uint64_t>(static_cast<std::uint32_t>(id)));
    return *this;
  }

  Hash128 digest() const { return {splitmix64(hi_), splitmix64(lo_ ^ hi_)}; }

private:
  std::uint64_t hi_ = 0x9ae16a3b2f90404fULL;
  std::uint64_t lo_ = 0xc3a5c85c97cb3127ULL;
};

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

/// mt19937_64 with self-contained distributions so identical seeds give
/// identical streams on every platform (std distributions are not pinned).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Uniform integer in [lo, hi], both inclusive, bias-free.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ContractError("uniform_int: empty range");
    std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(gen_());  // full 64-bit range
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range + 1) % range;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v > limit);
    return lo + static_cast<std::int64_t>(v % range);
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
  }

  /// Standard normal via Box-Muller (deterministic, no cached spare).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw ContractError("pick: empty vector");
    return v[index(v.size())];
  }

private:
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Small string helpers
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& words, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace inversor
