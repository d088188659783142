#pragma once

namespace lsor {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lsor
