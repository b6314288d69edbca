#pragma once

namespace cslm {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr const char* kModelFormatVersion = "CSLM1";

}  // namespace cslm
