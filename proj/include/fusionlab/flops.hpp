#pragma once

#include <cstdint>

// Flop accounting convention, pinned once and shared by the tape counter and
// the analytic cost model so the two routes can be compared exactly.
//
//   - one multiply-accumulate = 2 flops (MAC convention)
//   - elementwise add/sub/mul/scale   = 1 flop per element
//   - softmax and layernorm           = 5 flops per element
//   - GELU                            = 8 flops per element, ReLU = 1
//   - cross-entropy over logits       = 7 flops per logit element
//   - transpose/reshape/concat/slice/embedding lookup = 0 flops
//
// Counts are forward (inference) flops; backward passes are not counted.

namespace fusionlab::flops {

inline constexpr std::int64_t kMac = 2;
inline constexpr std::int64_t kElementwise = 1;
inline constexpr std::int64_t kSoftmaxPerElem = 5;
inline constexpr std::int64_t kLayernormPerElem = 5;
inline constexpr std::int64_t kGeluPerElem = 8;
inline constexpr std::int64_t kReluPerElem = 1;
inline constexpr std::int64_t kCrossEntropyPerElem = 7;

inline std::int64_t matmul(std::int64_t m, std::int64_t k, std::int64_t n) {
    return kMac * m * k * n;
}

inline std::int64_t elementwise(std::int64_t n) { return kElementwise * n; }

// out = x @ W (+ bias): tokens x in -> tokens x out
inline std::int64_t linear(std::int64_t tokens, std::int64_t in, std::int64_t out,
                           bool bias = true) {
    return matmul(tokens, in, out) + (bias ? tokens * out : 0);
}

inline std::int64_t softmax(std::int64_t elems) { return kSoftmaxPerElem * elems; }
inline std::int64_t layernorm(std::int64_t elems) { return kLayernormPerElem * elems; }
inline std::int64_t gelu(std::int64_t elems) { return kGeluPerElem * elems; }
inline std::int64_t relu(std::int64_t elems) { return kReluPerElem * elems; }
inline std::int64_t cross_entropy(std::int64_t rows, std::int64_t cols) {
    return kCrossEntropyPerElem * rows * cols;
}

// mean over rows: one add per element plus one scale per output column
inline std::int64_t mean_rows(std::int64_t rows, std::int64_t cols) {
    return rows * cols + cols;
}

}  // namespace fusionlab::flops
