#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lowshot {

using ClassId = std::uint32_t;

namespace detail {

inline void append_msg(std::ostringstream&) {}

template <typename T, typename... Rest>
void append_msg(std::ostringstream& oss, const T& head, const Rest&... rest) {
  oss << head;
  append_msg(oss, rest...);
}

}  // namespace detail

template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream oss;
  detail::append_msg(oss, parts...);
  return oss.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  throw std::invalid_argument(msg(parts...));
}

template <typename... Parts>
[[noreturn]] void fail_domain(const Parts&... parts) {
  throw std::domain_error(msg(parts...));
}

template <typename... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) fail(parts...);
}

}  // namespace lowshot
