#pragma once

namespace stochhom {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stochhom
