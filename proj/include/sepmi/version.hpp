#pragma once

namespace sepmi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sepmi
