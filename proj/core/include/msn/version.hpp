#pragma once

namespace msn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace msn
