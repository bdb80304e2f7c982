#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace slotlab {

// Contract-violation error. Thrown when a caller breaks a documented
// precondition (bad shapes, out-of-range arguments, invalid state).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O or data-format error carrying the offending path/context.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void contract_fail(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  throw ContractError(os.str());
}

}  // namespace slotlab

#define SLOTLAB_REQUIRE(cond, ...)                   \
  do {                                               \
    if (!(cond)) ::slotlab::contract_fail(__VA_ARGS__); \
  } while (0)
