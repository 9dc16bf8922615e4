#include "spatialgan/rng.hpp"

#include <sstream>

#include "spatialgan/errors.hpp"

namespace spatialgan {

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_ << ' ' << normal_ << ' ' << uniform_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  in >> engine_ >> normal_ >> uniform_;
  if (!in) throw FormatError("malformed rng state");
}

}  // namespace spatialgan
