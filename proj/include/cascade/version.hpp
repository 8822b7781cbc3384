#pragma once

namespace cascade {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cascade
