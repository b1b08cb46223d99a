#pragma once

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace vinslab {

/// Keeps freed heap memory in the process instead of trimming it back to the
/// kernel after every large free.
inline void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
#endif
}

}  // namespace vinslab
