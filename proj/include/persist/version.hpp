#pragma once

namespace persist {

inline constexpr const char* kToolName = "persist";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace persist
