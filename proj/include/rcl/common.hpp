#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rcl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (bad counts, sizes, unknown enum names).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. `row()` is the 1-based line number, 0 if unknown.
class ParseError : public Error {
public:
  ParseError(const std::string &what, std::size_t row)
      : Error(row ? "row " + std::to_string(row) + ": " + what : what),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

/// Data that violates an operation's precondition (shape, size, labels).
class DataError : public Error {
public:
  using Error::Error;
};

/// Non-finite values met while training or estimating Fisher information.
class TrainingError : public Error {
public:
  using Error::Error;
};

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named role: splitmix64(FNV-1a(parent as 8 little-endian
/// bytes, then the role string)). Stable across platforms, so adding a new
/// role never shifts the seeds of existing ones.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view role) {
  char le[8];
  for (int i = 0; i < 8; ++i)
    le[i] = static_cast<char>((parent >> (8 * i)) & 0xff);
  return splitmix64(fnv1a64(role, fnv1a64(std::string_view(le, 8))));
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4)
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

} // namespace rcl
