#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace wcluster {

inline constexpr const char* kVersion = "0.1.0";

// Invalid inputs: bad shapes, weights, configuration values.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// The computation itself broke down (underflow, divergence, degenerate pivots).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Metric { Euclidean, SquaredEuclidean };

inline const char* metric_name(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "squared_euclidean";
}

inline Metric metric_from_name(const std::string& s) {
  if (s == "euclidean") return Metric::Euclidean;
  if (s == "squared_euclidean") return Metric::SquaredEuclidean;
  throw ValidationError("unknown metric: " + s);
}

// Shortest round-trip decimal text for a double. Keeps artifacts byte-stable
// regardless of locale or worker count.
inline std::string format_double(double x) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("cannot parse number: '" + s + "'");
  return x;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string to_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace wcluster
