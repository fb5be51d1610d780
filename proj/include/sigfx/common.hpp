#ifndef SIGFX_COMMON_HPP
#define SIGFX_COMMON_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sigfx {

inline constexpr const char* kVersion = "0.1.0";

/// Row-major so that a window (one sample) is a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Binary signals and labels. Entries are expected to be 0 or 1.
using Labels = std::vector<int>;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Stable hashing and seed derivation. std::hash is not stable across
// implementations, so seeds are derived with FNV-1a and SplitMix64.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) noexcept
{
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept
{
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view identity) noexcept
{
  return derive_seed(master, fnv1a64(identity));
}

// ---------------------------------------------------------------------------
// Minimal warning sink. Library code reports recoverable conditions here
// instead of printing directly; the CLI and tests may redirect it.

using LogSink = std::function<void(std::string_view)>;

namespace detail {
inline std::mutex& log_mutex()
{
  static std::mutex m;
  return m;
}
inline LogSink& log_sink()
{
  static LogSink sink = [](std::string_view msg) { std::clog << "[sigfx] " << msg << '\n'; };
  return sink;
}
} // namespace detail

inline void set_log_sink(LogSink sink)
{
  std::lock_guard lock(detail::log_mutex());
  detail::log_sink() = std::move(sink);
}

inline void log_warning(std::string_view msg)
{
  std::lock_guard lock(detail::log_mutex());
  if (detail::log_sink())
    detail::log_sink()(msg);
}

inline void require_finite(const Matrix& X, std::string_view what)
{
  if (!X.allFinite())
    throw Error(std::string(what) + ": non-finite input");
}

inline void require_finite(const Vector& v, std::string_view what)
{
  if (!v.allFinite())
    throw Error(std::string(what) + ": non-finite input");
}

} // namespace sigfx

#endif // SIGFX_COMMON_HPP
