#pragma once

#include <cstddef>

// Data-parallel inner loops used by the training and analysis code.
// Every operation has a scalar reference implementation and, on x86-64
// hardware with AVX2+FMA, a vectorized variant. The active backend is
// chosen once at startup; MOTIONMAP_KERNELS={auto,scalar,avx2} overrides.
//
// All matrices are row-major. Reductions in the AVX2 backend use a
// different summation order than the scalar reference, so results agree
// to rounding error, not bitwise; the equivalence tests pin the bound.

namespace motionmap::kernels {

struct Backend {
    const char* name;

    // sum_i a[i]*b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);

    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // y = A x           (A: rows x cols)
    void (*matvec)(const double* a, std::size_t rows, std::size_t cols,
                   const double* x, double* y);

    // y += A x
    void (*matvec_add)(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y);

    // x += A^T y        (A: rows x cols, y: rows, x: cols)
    void (*matvec_t_add)(const double* a, std::size_t rows, std::size_t cols,
                         const double* y, double* x);

    // A += x y^T        (x: rows, y: cols)
    void (*ger)(double* a, std::size_t rows, std::size_t cols,
                const double* x, const double* y);

    // sum_i (a[i]-b[i])^2
    double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);

    // one Adam step over a parameter tensor; t is the bias-correction step
    // (>= 1). m, v are the moment accumulators.
    void (*adam_step)(double* w, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, long t);
};

const Backend& scalar_backend();

// nullptr when not compiled in or the CPU lacks AVX2/FMA
const Backend* avx2_backend();

// scalar unless AVX2 is usable; MOTIONMAP_KERNELS forces a choice
const Backend& active();

}  // namespace motionmap::kernels
