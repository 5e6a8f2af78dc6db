#include "gfnet/util/rng.hpp"

#include <sstream>

#include "gfnet/util/errors.hpp"

namespace gfnet {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ConfigError("rng: malformed state");
  return rng;
}

}  // namespace gfnet
