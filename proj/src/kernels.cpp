#include "panning/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace panning::kernels {
namespace {

Backend pick_initial() {
  const char* env = std::getenv("PANNING_KERNELS");
  if (env) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0) return Backend::Avx2;
  }
  return avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

Backend& current() {
  static Backend b = pick_initial();
  return b;
}

}  // namespace

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return current(); }

void set_backend(Backend b) { current() = b; }

std::string backend_name(Backend b) {
  return b == Backend::Avx2 ? "avx2" : "scalar";
}

const Ops& ops() {
  return current() == Backend::Avx2 ? detail::avx2_ops : detail::scalar_ops;
}

}  // namespace panning::kernels
