#pragma once

namespace qlbayes {
inline constexpr const char* version = "0.1.0";
}
