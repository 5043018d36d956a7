#pragma once

namespace capkit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace capkit
