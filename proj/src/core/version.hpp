#pragma once

namespace brm {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace brm
