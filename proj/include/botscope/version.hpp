#pragma once

namespace botscope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace botscope
