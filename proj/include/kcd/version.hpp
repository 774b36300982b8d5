#pragma once

namespace kcd {

inline constexpr const char* kToolName = "kcd";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace kcd
