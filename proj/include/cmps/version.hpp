#pragma once

namespace cmps {

inline constexpr const char* version = "0.1.0";

}  // namespace cmps
