#include "fusionlab/simd/kernels.hpp"

// Reference kernels. Plain loops, fixed left-to-right accumulation order; the
// SIMD variants are checked against these.

namespace fusionlab::simd {
namespace {

template <typename T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
void axpy_scalar(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void add_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_scalar(const T* a, T s, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

template <typename T>
T sum_scalar(const T* a, std::size_t n) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <typename T>
T max_scalar(const T* a, std::size_t n) {
    T m = a[0];
    for (std::size_t i = 1; i < n; ++i)
        if (a[i] > m) m = a[i];
    return m;
}

template <typename T>
constexpr KernelTable<T> make_table() {
    return KernelTable<T>{dot_scalar<T>,   axpy_scalar<T>, add_scalar<T>,
                          sub_scalar<T>,   mul_scalar<T>,  scale_scalar<T>,
                          sum_scalar<T>,   max_scalar<T>};
}

const KernelTable<float> kScalarF32 = make_table<float>();
const KernelTable<double> kScalarF64 = make_table<double>();

}  // namespace

namespace detail {
template <> const KernelTable<float>& scalar_table<float>() { return kScalarF32; }
template <> const KernelTable<double>& scalar_table<double>() { return kScalarF64; }
}  // namespace detail

}  // namespace fusionlab::simd
