#pragma once

namespace diffaug {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace diffaug
