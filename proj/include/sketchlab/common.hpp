#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sketchlab {

// Thrown on contract violations (bad shapes, invalid arguments, corrupt files).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void check_fail(const char* expr, const char* file, int line,
                       const std::string& msg) {
  std::ostringstream os;
  os << file << ":" << line << ": check failed: " << expr;
  if (!msg.empty()) os << " — " << msg;
  throw Error(os.str());
}
}  // namespace detail

#define SK_CHECK(cond, msg)                                              \
  do {                                                                   \
    if (!(cond)) {                                                       \
      std::ostringstream sk_os_;                                         \
      sk_os_ << msg;                                                     \
      ::sketchlab::detail::check_fail(#cond, __FILE__, __LINE__,         \
                                      sk_os_.str());                     \
    }                                                                    \
  } while (0)

// Throw a specific Error subclass when `cond` holds.
#define SK_THROW_IF(cond, ErrorType, msg) \
  do {                                    \
    if (cond) {                           \
      std::ostringstream sk_os_;          \
      sk_os_ << msg;                      \
      throw ErrorType(sk_os_.str());      \
    }                                     \
  } while (0)

constexpr int kImageSize = 64;
constexpr int kImagePixels = kImageSize * kImageSize;

}  // namespace sketchlab
