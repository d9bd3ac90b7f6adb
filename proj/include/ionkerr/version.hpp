#pragma once

namespace ionkerr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ionkerr
