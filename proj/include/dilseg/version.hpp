#pragma once

namespace dilseg {
inline constexpr const char* kToolkitName = "dilseg";
inline constexpr const char* kToolkitVersion = "0.1.0";
}  // namespace dilseg
