#include "fusionlab/simd/kernels.hpp"

#include "fusionlab/errors.hpp"

namespace fusionlab::simd {

namespace {
Backend g_backend = Backend::Scalar;

KernelTable<float> g_active_f32 = detail::scalar_table<float>();
KernelTable<double> g_active_f64 = detail::scalar_table<double>();
}  // namespace

namespace detail {
template <> KernelTable<float>& active_table<float>() { return g_active_f32; }
template <> KernelTable<double>& active_table<double>() { return g_active_f64; }
}  // namespace detail

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return detail::avx2_table<float>() != nullptr && __builtin_cpu_supports("avx2") &&
           __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend active_backend() { return g_backend; }

std::string backend_name() { return g_backend == Backend::Avx2 ? "avx2" : "scalar"; }

void select_backend(Backend b) {
    if (b == Backend::Avx2) {
        if (!avx2_available())
            throw ConfigError("avx2 backend requested but not supported on this CPU");
        g_active_f32 = *detail::avx2_table<float>();
        g_active_f64 = *detail::avx2_table<double>();
    } else {
        g_active_f32 = detail::scalar_table<float>();
        g_active_f64 = detail::scalar_table<double>();
    }
    g_backend = b;
}

void select_best() {
    select_backend(avx2_available() ? Backend::Avx2 : Backend::Scalar);
}

}  // namespace fusionlab::simd
