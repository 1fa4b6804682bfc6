#pragma once

namespace embedkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace embedkit
