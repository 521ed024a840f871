#include "gbfl/hash.hpp"

#include <cstdio>

namespace gbfl {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace gbfl
