#include "motionmap/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace motionmap::kernels {

#if defined(MOTIONMAP_HAVE_AVX2)
const Backend* avx2_backend_impl();
#endif

const Backend* avx2_backend() {
#if defined(MOTIONMAP_HAVE_AVX2)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return avx2_backend_impl();
#endif
    return nullptr;
}

namespace {

const Backend* pick_active() {
    const char* force = std::getenv("MOTIONMAP_KERNELS");
    if (force != nullptr && std::strcmp(force, "scalar") == 0)
        return &scalar_backend();
    const Backend* vec = avx2_backend();
    if (force != nullptr && std::strcmp(force, "avx2") == 0 && vec == nullptr)
        return &scalar_backend();  // requested but unavailable; fall back
    return vec != nullptr ? vec : &scalar_backend();
}

}  // namespace

const Backend& active() {
    static const Backend* chosen = pick_active();
    return *chosen;
}

}  // namespace motionmap::kernels
