#pragma once

#include <cstddef>
#include <string>

namespace pasmr {

// Dense double-precision kernels behind the model's inner loops. A scalar
// reference implementation always exists; an AVX2 variant is selected at
// runtime when the CPU supports it. Both variants are equivalence-tested.
//
// Matrices are row-major. matvec treats W as rows x cols.
struct Kernels {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*max_value)(const double* a, std::size_t n);  // n must be > 0

    void (*axpy)(double* y, double a, const double* x, std::size_t n);    // y += a*x
    void (*scale)(double* y, double a, std::size_t n);                    // y *= a
    void (*mul_add)(double* y, const double* a, const double* b, std::size_t n);  // y += a.*b

    void (*matvec)(double* y, const double* w, const double* x,
                   std::size_t rows, std::size_t cols);      // y  = W x
    void (*matvec_add)(double* y, const double* w, const double* x,
                       std::size_t rows, std::size_t cols);  // y += W x
    void (*matvec_t_add)(double* y, const double* w, const double* g,
                         std::size_t rows, std::size_t cols);  // y += W^T g
    void (*ger_add)(double* w, const double* g, const double* x,
                    std::size_t rows, std::size_t cols);       // W += g x^T

    // Adam with bias correction: m,v updated in place, p -= lr*mhat/(sqrt(vhat)+eps).
    // c1 = 1-beta1^t, c2 = 1-beta2^t. Elementwise, so scalar and AVX2 agree bit-exactly.
    void (*adam_update)(double* p, double* m, double* v, const double* g, std::size_t n,
                        double lr, double beta1, double beta2, double eps,
                        double c1, double c2);
};

enum class KernelBackend { Auto, Scalar, Avx2 };

const Kernels& scalar_kernels();
bool avx2_supported();
const Kernels& avx2_kernels();  // call only when avx2_supported()

/// Selects the active backend. Auto picks AVX2 when available. Call once at
/// startup; the selection is process-global and not thread-safe.
void set_kernel_backend(KernelBackend backend);
KernelBackend parse_kernel_backend(const std::string& name);
std::string kernel_backend_name();

/// Active kernel table.
const Kernels& K();

}  // namespace pasmr
