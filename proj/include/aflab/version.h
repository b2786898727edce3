#pragma once

namespace aflab {

inline constexpr char kCodeVersion[] = "0.1.0";

}  // namespace aflab
