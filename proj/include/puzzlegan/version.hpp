#pragma once

namespace puzzlegan {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace puzzlegan
