#pragma once

namespace ntljb {

inline constexpr const char* kVersion = "ntljb 0.1.0";

}  // namespace ntljb
