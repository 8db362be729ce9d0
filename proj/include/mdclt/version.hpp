#pragma once

namespace mdclt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mdclt
