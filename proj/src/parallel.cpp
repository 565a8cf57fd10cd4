#include "ntljb/parallel.hpp"

namespace ntljb::par {

namespace {
Mode g_mode = Mode::openmp;
}

Mode mode() noexcept { return g_mode; }
void set_mode(Mode m) noexcept { g_mode = m; }

const char* mode_name(Mode m) noexcept {
  return m == Mode::serial ? "serial" : "openmp";
}

}  // namespace ntljb::par
