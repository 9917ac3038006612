#pragma once

// Selects the scalar type of the differentiable core. The core library is
// compiled once per width; the inline namespace keeps the two builds
// link-compatible inside one executable.

#if defined(TRANSDA_REAL_DOUBLE)
#define TRANSDA_PRECISION_NS f64
#else
#define TRANSDA_PRECISION_NS f32
#endif

#define TRANSDA_CORE_BEGIN \
  namespace transda {      \
  inline namespace TRANSDA_PRECISION_NS {
#define TRANSDA_CORE_END \
  }                      \
  }

TRANSDA_CORE_BEGIN
#if defined(TRANSDA_REAL_DOUBLE)
using Real = double;
#else
using Real = float;
#endif
TRANSDA_CORE_END
