#include "pasmr/kernels.hpp"

#include <cmath>

namespace pasmr {
namespace {

double s_dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double s_sum(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double s_max(const double* a, std::size_t n) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i)
        if (a[i] > m) m = a[i];
    return m;
}

void s_axpy(double* y, double a, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scale(double* y, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void s_mul_add(double* y, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void s_matvec(double* y, const double* w, const double* x,
              std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = s_dot(w + r * cols, x, cols);
}

void s_matvec_add(double* y, const double* w, const double* x,
                  std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) y[r] += s_dot(w + r * cols, x, cols);
}

void s_matvec_t_add(double* y, const double* w, const double* g,
                    std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) s_axpy(y, g[r], w + r * cols, cols);
}

void s_ger_add(double* w, const double* g, const double* x,
               std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) s_axpy(w + r * cols, g[r], x, cols);
}

void s_adam(double* p, double* m, double* v, const double* g, std::size_t n,
            double lr, double beta1, double beta2, double eps,
            double c1, double c2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar", s_dot, s_sum, s_max, s_axpy, s_scale, s_mul_add,
        s_matvec, s_matvec_add, s_matvec_t_add, s_ger_add, s_adam,
    };
    return k;
}

}  // namespace pasmr
