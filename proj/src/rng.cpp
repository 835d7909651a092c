#include "cofinet/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "cofinet/error.hpp"

namespace cofi {

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw ValueError("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() {
  // Box-Muller; u1 is kept away from zero.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw FormatError("rng: unreadable state string");
}

}  // namespace cofi
