#include "motionmap/kernels.hpp"

#include <cmath>

namespace motionmap::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(a + r * cols, x, cols);
}

void matvec_add_scalar(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(a + r * cols, x, cols);
}

void matvec_t_add_scalar(const double* a, std::size_t rows, std::size_t cols,
                         const double* y, double* x) {
    for (std::size_t r = 0; r < rows; ++r) axpy_scalar(y[r], a + r * cols, x, cols);
}

void ger_scalar(double* a, std::size_t rows, std::size_t cols, const double* x,
                const double* y) {
    for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], y, a + r * cols, cols);
}

double sum_sq_diff_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void adam_step_scalar(double* w, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, long t) {
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

const Backend scalar = {
    "scalar",
    dot_scalar,
    axpy_scalar,
    matvec_scalar,
    matvec_add_scalar,
    matvec_t_add_scalar,
    ger_scalar,
    sum_sq_diff_scalar,
    adam_step_scalar,
};

}  // namespace

const Backend& scalar_backend() { return scalar; }

}  // namespace motionmap::kernels
