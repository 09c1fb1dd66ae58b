// Fallback for targets without AVX2 support: the avx2 table aliases the
// scalar kernels so dispatch code stays unconditional.

#include "panning/kernels.hpp"

namespace panning::kernels::detail {
const Ops avx2_ops = scalar_ops;
}  // namespace panning::kernels::detail
