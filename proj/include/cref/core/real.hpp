#pragma once

#include <cstddef>
#include <cstdint>

namespace cref {

// Element precision is a build-wide setting (CREF_SINGLE_PRECISION).
#ifdef CREF_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

inline constexpr bool kDoublePrecision = sizeof(real) == 8;

}  // namespace cref
