#include "mta/rng.hpp"

namespace mta {

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace mta
