#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchmatch {

// Training builds may switch to 32-bit reals (-DSKETCHMATCH_REAL32); tests
// and the acceptance suite run at 64-bit for finite-difference fidelity.
#ifdef SKETCHMATCH_REAL32
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// All contract violations surface as sketchmatch::Error with a message that
// names the offending operation and the shapes involved.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace sketchmatch
