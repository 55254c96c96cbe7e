#pragma once

#include <cstddef>
#include <string>

// Vector kernels behind the tensor ops. Every kernel has a scalar reference
// implementation and (on x86) an AVX2/FMA variant selected at runtime; the two
// are equivalence-tested against each other. The scalar path is the
// deterministic cross-machine reference and is what --deterministic pins.

namespace fusionlab::simd {

enum class Backend { Scalar, Avx2 };

template <typename T>
struct KernelTable {
    T (*dot)(const T*, const T*, std::size_t);
    void (*axpy)(T, const T*, T*, std::size_t);  // y += a * x
    void (*add)(const T*, const T*, T*, std::size_t);
    void (*sub)(const T*, const T*, T*, std::size_t);
    void (*mul)(const T*, const T*, T*, std::size_t);
    void (*scale)(const T*, T, T*, std::size_t);  // out = a * s
    T (*sum)(const T*, std::size_t);
    T (*max)(const T*, std::size_t);  // requires n >= 1
};

namespace detail {
template <typename T> const KernelTable<T>& scalar_table();
// null when this binary was not built with the AVX2 translation unit enabled
template <typename T> const KernelTable<T>* avx2_table();
template <typename T> KernelTable<T>& active_table();
}  // namespace detail

bool avx2_available();
Backend active_backend();
std::string backend_name();

/// Select a backend explicitly; throws ConfigError if unavailable.
void select_backend(Backend b);
/// Select the fastest backend supported by the running CPU.
void select_best();

template <typename T> inline const KernelTable<T>& active() { return detail::active_table<T>(); }

template <typename T> inline T dot(const T* a, const T* b, std::size_t n) {
    return active<T>().dot(a, b, n);
}
template <typename T> inline void axpy(T a, const T* x, T* y, std::size_t n) {
    active<T>().axpy(a, x, y, n);
}
template <typename T> inline void add(const T* a, const T* b, T* out, std::size_t n) {
    active<T>().add(a, b, out, n);
}
template <typename T> inline void sub(const T* a, const T* b, T* out, std::size_t n) {
    active<T>().sub(a, b, out, n);
}
template <typename T> inline void mul(const T* a, const T* b, T* out, std::size_t n) {
    active<T>().mul(a, b, out, n);
}
template <typename T> inline void scale(const T* a, T s, T* out, std::size_t n) {
    active<T>().scale(a, s, out, n);
}
template <typename T> inline T sum(const T* a, std::size_t n) { return active<T>().sum(a, n); }
template <typename T> inline T max(const T* a, std::size_t n) { return active<T>().max(a, n); }

}  // namespace fusionlab::simd
